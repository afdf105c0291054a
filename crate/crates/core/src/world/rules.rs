//! The generator's rule table: which action answers a command in a given
//! context, and which sensors an annotated context pins down.

use std::collections::HashMap;
use std::sync::{Arc, OnceLock};

use thiserror::Error;

use crate::home::{
    annotated_space, find_action, Activity, Place, Room, SensorKind, SensorManifest, Verb, VoiceCommand,
};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RuleError {
    #[error("rule line {line}: {message}")]
    Syntax { line: usize, message: String },
    #[error("no rule resolves {0:?}")]
    Unresolved((Room, Activity, VoiceCommand)),
    #[error("rule for {context:?} targets `{target}`, which is not in the action catalog")]
    NotInCatalog { context: (Room, Activity, VoiceCommand), target: String },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum ValueSpec {
    Fixed(f64),
    /// Uniform draw in the closed interval.
    Range(f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
enum PlaceSpec {
    Fixed(Place),
    Location,
}

#[derive(Debug, Clone, PartialEq)]
struct ActionRule {
    location: Option<Room>,
    activity: Option<Activity>,
    command: VoiceCommand,
    verb: Verb,
    device: String,
    place: PlaceSpec,
}

#[derive(Debug, Clone, PartialEq)]
struct Constraint {
    location: Option<Room>,
    activity: Option<Activity>,
    sensor: String,
    value: ValueSpec,
}

fn specificity(location: Option<Room>, activity: Option<Activity>) -> u8 {
    2 * location.is_some() as u8 + activity.is_some() as u8
}

fn matches(location: Option<Room>, activity: Option<Activity>, room: Room, act: Activity) -> bool {
    location.is_none_or(|l| l == room) && activity.is_none_or(|a| a == act)
}

/// Parsed rule table, checked to resolve every annotated triple to exactly
/// one catalog action.
#[derive(Debug, Clone)]
pub struct RuleTable {
    actions: Vec<ActionRule>,
    constraints: Vec<Constraint>,
    resolved: HashMap<(Room, Activity, VoiceCommand), usize>,
}

impl RuleTable {
    pub fn parse(text: &str) -> Result<Self, RuleError> {
        let mut actions = Vec::new();
        let mut constraints = Vec::new();
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let err = |message: String| RuleError::Syntax { line, message };
            let (lhs, rhs) =
                body.split_once("->").or_else(|| body.split_once('→')).ok_or_else(|| err("missing `->`".into()))?;
            let lhs = lhs.trim();
            let rhs: Vec<&str> = rhs.split(';').map(str::trim).collect();
            let room_pat = |s: &str| match s {
                "*" => Ok(None),
                s => Room::parse(s).map(Some).map_err(|e| err(e.to_string())),
            };
            let act_pat = |s: &str| match s {
                "*" => Ok(None),
                s => Activity::parse(s).map(Some).map_err(|e| err(e.to_string())),
            };
            if let Some((loc, act)) = lhs.split_once('/') {
                let [sensor, value] = rhs[..] else {
                    return Err(err("constraint target is sensor_id;value".into()));
                };
                let value = parse_value(value).ok_or_else(|| err(format!("bad value `{value}`")))?;
                constraints.push(Constraint {
                    location: room_pat(loc.trim())?,
                    activity: act_pat(act.trim())?,
                    sensor: sensor.to_string(),
                    value,
                });
            } else {
                let l: Vec<&str> = lhs.split(';').map(str::trim).collect();
                let (&[loc, act, verb, object], &[tverb, device, place]) = (&l[..], &rhs[..]) else {
                    return Err(err("action rule is location;activity;verb;object -> verb;device;place".into()));
                };
                let parse_verb = |s: &str| Verb::parse(s).map_err(|e| err(e.to_string()));
                let command = VoiceCommand::new(
                    parse_verb(verb)?,
                    crate::home::Object::parse(object).map_err(|e| err(e.to_string()))?,
                );
                let place = match place {
                    "@location" => PlaceSpec::Location,
                    p => PlaceSpec::Fixed(Place::parse(p).map_err(|e| err(e.to_string()))?),
                };
                actions.push(ActionRule {
                    location: room_pat(loc)?,
                    activity: act_pat(act)?,
                    command,
                    verb: parse_verb(tverb)?,
                    device: device.to_string(),
                    place,
                });
            }
        }
        let ambiguous = |line: String| RuleError::Syntax { line: 0, message: line };
        for (i, a) in actions.iter().enumerate() {
            for b in &actions[i + 1..] {
                if a.location == b.location && a.activity == b.activity && a.command == b.command {
                    return Err(ambiguous(format!(
                        "duplicate action rule for {:?}",
                        (a.location, a.activity, a.command)
                    )));
                }
            }
        }
        for (i, a) in constraints.iter().enumerate() {
            for b in &constraints[i + 1..] {
                if a.location == b.location && a.activity == b.activity && a.sensor == b.sensor {
                    return Err(ambiguous(format!("duplicate constraint for `{}`", a.sensor)));
                }
            }
        }
        let mut table = RuleTable { actions, constraints, resolved: HashMap::new() };
        for (room, activity, command) in annotated_space() {
            let idx = table.resolve_uncached(room, activity, command)?;
            table.resolved.insert((room, activity, command), idx);
        }
        Ok(table)
    }

    pub fn reference() -> Arc<RuleTable> {
        static TABLE: OnceLock<Arc<RuleTable>> = OnceLock::new();
        TABLE
            .get_or_init(|| Arc::new(RuleTable::parse(Self::reference_text()).expect("bundled rules are valid")))
            .clone()
    }

    pub fn reference_text() -> &'static str {
        include_str!("../../data/rules.txt")
    }

    fn resolve_uncached(&self, room: Room, activity: Activity, command: VoiceCommand) -> Result<usize, RuleError> {
        let ctx = (room, activity, command);
        let rule = self
            .actions
            .iter()
            .filter(|r| r.command == command && matches(r.location, r.activity, room, activity))
            .max_by_key(|r| specificity(r.location, r.activity))
            .ok_or(RuleError::Unresolved(ctx))?;
        let place = match rule.place {
            PlaceSpec::Fixed(p) => p,
            PlaceSpec::Location => Place::Room(room),
        };
        find_action(rule.verb, &rule.device, place).map(|a| a.index).ok_or_else(|| RuleError::NotInCatalog {
            context: ctx,
            target: format!("{} {} {}", rule.verb, rule.device, place),
        })
    }

    /// Expected action index for an annotated triple.
    pub fn resolve(&self, room: Room, activity: Activity, command: VoiceCommand) -> Result<usize, RuleError> {
        self.resolved.get(&(room, activity, command)).copied().ok_or(RuleError::Unresolved((room, activity, command)))
    }

    /// The most specific constraint on `sensor` in this context.
    pub fn constraint(&self, room: Room, activity: Activity, sensor: &str) -> Option<ValueSpec> {
        self.constraints
            .iter()
            .filter(|c| c.sensor == sensor && matches(c.location, c.activity, room, activity))
            .max_by_key(|c| specificity(c.location, c.activity))
            .map(|c| c.value)
    }

    /// Checks constrained sensors exist and constrained values fit their domain.
    pub fn check_against(&self, manifest: &SensorManifest) -> Result<(), RuleError> {
        for c in &self.constraints {
            let bad = |message: String| RuleError::Syntax { line: 0, message };
            let spec = manifest.get(&c.sensor).ok_or_else(|| bad(format!("unknown sensor `{}`", c.sensor)))?;
            let ok = match c.value {
                ValueSpec::Fixed(v) => spec.accepts(v),
                ValueSpec::Range(lo, hi) => spec.kind != SensorKind::Binary && spec.accepts(lo) && spec.accepts(hi),
            };
            if !ok {
                return Err(bad(format!("constraint on `{}` leaves its domain", c.sensor)));
            }
        }
        Ok(())
    }
}

fn parse_value(s: &str) -> Option<ValueSpec> {
    match s.split_once("..") {
        Some((lo, hi)) => {
            let (lo, hi) = (lo.trim().parse().ok()?, hi.trim().parse().ok()?);
            (lo <= hi).then_some(ValueSpec::Range(lo, hi))
        }
        None => s.parse().ok().map(ValueSpec::Fixed),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::home::{action_by_index, Object, DO_NOTHING};

    #[test]
    fn reference_examples() {
        let t = RuleTable::reference();
        let on_light = VoiceCommand::new(Verb::TurnOn, Object::Light);
        let a = action_by_index(t.resolve(Room::Kitchen, Activity::WashDishes, on_light).unwrap()).unwrap();
        assert_eq!((a.device, a.place), ("light_sink", Place::Room(Room::Kitchen)));
        let a = action_by_index(t.resolve(Room::Kitchen, Activity::Cook, on_light).unwrap()).unwrap();
        assert_eq!(a.device, "light_sink");
        let open_blinds = VoiceCommand::new(Verb::Open, Object::Blinds);
        let a = action_by_index(t.resolve(Room::Kitchen, Activity::None, open_blinds).unwrap()).unwrap();
        assert_eq!((a.verb, a.device, a.place), (Verb::Open, "blinds", Place::Room(Room::Kitchen)));
        assert_eq!(t.resolve(Room::Bathroom, Activity::Clean, on_light).unwrap(), DO_NOTHING);
        t.check_against(&SensorManifest::reference()).unwrap();
    }

    #[test]
    fn constraints_prefer_specific_lines() {
        let t = RuleTable::reference();
        assert_eq!(t.constraint(Room::Kitchen, Activity::Cook, "kitchen_hob_on"), Some(ValueSpec::Fixed(1.0)));
        assert_eq!(t.constraint(Room::Kitchen, Activity::Eat, "kitchen_hob_on"), Some(ValueSpec::Fixed(0.0)));
        assert_eq!(t.constraint(Room::Study, Activity::None, "kitchen_co2"), Some(ValueSpec::Range(300.0, 800.0)));
        assert_eq!(t.constraint(Room::Kitchen, Activity::None, "kitchen_co2"), Some(ValueSpec::Range(1500.0, 3000.0)));
        assert_eq!(t.constraint(Room::Kitchen, Activity::None, "kitchen_window"), None);
    }

    #[test]
    fn every_command_reaches_an_action() {
        let t = RuleTable::reference();
        for (room, act, cmd) in annotated_space() {
            let idx = t.resolve(room, act, cmd).unwrap();
            let a = action_by_index(idx).unwrap();
            assert!(idx == DO_NOTHING || (a.verb == cmd.verb && a.object == cmd.object), "{room} {act} {cmd}");
        }
    }

    #[test]
    fn malformed_tables() {
        assert!(matches!(RuleTable::parse("kitchen;cook;turn_on;light\n"), Err(RuleError::Syntax { line: 1, .. })));
        assert!(RuleTable::parse("").is_err());
        let dup = "*/* -> kitchen_hob_on;0\n*/* -> kitchen_hob_on;1\n";
        assert!(RuleTable::parse(dup).is_err());
        let bad_target = RuleTable::reference_text().replace(
            "*;*;call_parent;phone -> call_parent;phone;study",
            "*;*;call_parent;phone -> call_parent;phone;kitchen",
        );
        assert!(matches!(RuleTable::parse(&bad_target), Err(RuleError::NotInCatalog { .. })));
    }
}
