//! Vocabulary of the home: rooms, sensors, commands, the action catalog and
//! the observable environment state.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;
use std::sync::{Arc, OnceLock};

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum HomeError {
    #[error("manifest line {line}: {message}")]
    Manifest { line: usize, message: String },
    #[error("unknown {kind} token `{token}`")]
    UnknownToken { kind: &'static str, token: String },
    #[error("action index {0} out of range 0..=32")]
    ActionIndex(usize),
}

macro_rules! token_enum {
    ($(#[$meta:meta])* $name:ident, $kind:literal { $($variant:ident => $tok:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
        #[serde(rename_all = "snake_case")]
        pub enum $name { $($variant),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn token(self) -> &'static str {
                match self { $($name::$variant => $tok),+ }
            }

            pub fn parse(s: &str) -> Result<Self, HomeError> {
                match s.trim() {
                    $($tok => Ok($name::$variant),)+
                    other => Err(HomeError::UnknownToken { kind: $kind, token: other.to_string() }),
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.token())
            }
        }

        impl std::str::FromStr for $name {
            type Err = HomeError;
            fn from_str(s: &str) -> Result<Self, HomeError> {
                Self::parse(s)
            }
        }
    };
}

token_enum!(Room, "room" {
    Kitchen => "kitchen",
    Bathroom => "bathroom",
    Bedroom => "bedroom",
    Study => "study",
});

impl Room {
    /// Rooms sharing a doorway. Symmetric by construction.
    pub fn adjacent(self) -> &'static [Room] {
        match self {
            Room::Kitchen => &[Room::Bathroom, Room::Bedroom],
            Room::Bathroom => &[Room::Kitchen, Room::Bedroom],
            Room::Bedroom => &[Room::Kitchen, Room::Bathroom, Room::Study],
            Room::Study => &[Room::Bedroom],
        }
    }

    pub fn is_adjacent(self, other: Room) -> bool {
        self.adjacent().contains(&other)
    }

    /// Activities an inhabitant can be annotated with in this room.
    pub fn activities(self) -> &'static [Activity] {
        use Activity::*;
        match self {
            Room::Kitchen => &[Cook, WashDishes, Eat, Clean, None],
            Room::Bathroom => &[Clean, None],
            Room::Bedroom => &[Nap, Read, Clean, None],
            Room::Study => &[Read, Converse, Clean, None],
        }
    }
}

token_enum!(Activity, "activity" {
    Cook => "cook",
    WashDishes => "wash_dishes",
    Eat => "eat",
    Clean => "clean",
    Nap => "nap",
    Read => "read",
    Converse => "converse",
    None => "none",
});

token_enum!(SensorKind, "sensor kind" {
    Binary => "binary",
    Continuous => "continuous",
    Gauge => "gauge",
});

token_enum!(Verb, "verb" {
    TurnOn => "turn_on",
    TurnOff => "turn_off",
    Open => "open",
    Close => "close",
    GiveTime => "give_time",
    GiveTemperature => "give_temperature",
    CallEmergency => "call_emergency",
    CallParent => "call_parent",
    None => "none",
});

token_enum!(Object, "object" {
    Light => "light",
    Radio => "radio",
    Blinds => "blinds",
    Curtains => "curtains",
    Speech => "speech",
    Phone => "phone",
    None => "none",
});

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct VoiceCommand {
    pub verb: Verb,
    pub object: Object,
}

impl VoiceCommand {
    pub const NONE: VoiceCommand = VoiceCommand { verb: Verb::None, object: Object::None };

    pub const fn new(verb: Verb, object: Object) -> Self {
        VoiceCommand { verb, object }
    }

    pub fn is_none(&self) -> bool {
        *self == Self::NONE
    }

    /// The twelve utterances the inhabitant can make.
    pub fn vocabulary() -> &'static [VoiceCommand] {
        use Object as O;
        use Verb as V;
        const ALL: [VoiceCommand; 12] = [
            VoiceCommand::new(V::TurnOn, O::Light),
            VoiceCommand::new(V::TurnOff, O::Light),
            VoiceCommand::new(V::TurnOn, O::Radio),
            VoiceCommand::new(V::TurnOff, O::Radio),
            VoiceCommand::new(V::Open, O::Blinds),
            VoiceCommand::new(V::Close, O::Blinds),
            VoiceCommand::new(V::Open, O::Curtains),
            VoiceCommand::new(V::Close, O::Curtains),
            VoiceCommand::new(V::GiveTime, O::Speech),
            VoiceCommand::new(V::GiveTemperature, O::Speech),
            VoiceCommand::new(V::CallEmergency, O::Phone),
            VoiceCommand::new(V::CallParent, O::Phone),
        ];
        &ALL
    }
}

impl fmt::Display for VoiceCommand {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {}", self.verb, self.object)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Place {
    Room(Room),
    Nowhere,
}

impl Place {
    pub fn token(self) -> &'static str {
        match self {
            Place::Room(r) => r.token(),
            Place::Nowhere => "nowhere",
        }
    }

    pub fn parse(s: &str) -> Result<Self, HomeError> {
        match s.trim() {
            "nowhere" => Ok(Place::Nowhere),
            other => Room::parse(other).map(Place::Room),
        }
    }
}

impl fmt::Display for Place {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.token())
    }
}

/// One entry of the action catalog. `object` is the device category the
/// command addresses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Action {
    pub index: usize,
    pub verb: Verb,
    pub object: Object,
    pub device: &'static str,
    pub place: Place,
}

pub const ACTION_COUNT: usize = 33;
pub const DO_NOTHING: usize = 32;

const fn act(index: usize, verb: Verb, object: Object, device: &'static str, room: Room) -> Action {
    Action { index, verb, object, device, place: Place::Room(room) }
}

static CATALOG: [Action; ACTION_COUNT] = {
    use Object as O;
    use Room::*;
    use Verb as V;
    [
        act(0, V::TurnOn, O::Light, "lights_all", Kitchen),
        act(1, V::TurnOn, O::Light, "light_sink", Kitchen),
        act(2, V::TurnOn, O::Light, "light_ceiling", Kitchen),
        act(3, V::TurnOn, O::Light, "lights_all", Bedroom),
        act(4, V::TurnOn, O::Light, "lamp_bedside", Bedroom),
        act(5, V::TurnOn, O::Light, "light_ceiling", Bedroom),
        act(6, V::TurnOn, O::Light, "light_ceiling", Study),
        act(7, V::TurnOff, O::Light, "lights_all", Kitchen),
        act(8, V::TurnOff, O::Light, "light_sink", Kitchen),
        act(9, V::TurnOff, O::Light, "light_ceiling", Kitchen),
        act(10, V::TurnOff, O::Light, "lights_all", Bedroom),
        act(11, V::TurnOff, O::Light, "lamp_bedside", Bedroom),
        act(12, V::TurnOff, O::Light, "light_ceiling", Bedroom),
        act(13, V::TurnOff, O::Light, "light_ceiling", Study),
        act(14, V::TurnOn, O::Radio, "radio", Bedroom),
        act(15, V::TurnOff, O::Radio, "radio", Bedroom),
        act(16, V::Open, O::Blinds, "blinds", Kitchen),
        act(17, V::Open, O::Blinds, "blinds", Bedroom),
        act(18, V::Open, O::Blinds, "blinds", Study),
        act(19, V::Close, O::Blinds, "blinds", Kitchen),
        act(20, V::Close, O::Blinds, "blinds", Bedroom),
        act(21, V::Close, O::Blinds, "blinds", Study),
        act(22, V::Open, O::Curtains, "curtains", Bedroom),
        act(23, V::Close, O::Curtains, "curtains", Bedroom),
        act(24, V::GiveTime, O::Speech, "speakers", Kitchen),
        act(25, V::GiveTime, O::Speech, "speakers", Bedroom),
        act(26, V::GiveTime, O::Speech, "speakers", Study),
        act(27, V::GiveTemperature, O::Speech, "speakers", Kitchen),
        act(28, V::GiveTemperature, O::Speech, "speakers", Bedroom),
        act(29, V::GiveTemperature, O::Speech, "speakers", Study),
        act(30, V::CallEmergency, O::Phone, "phone", Study),
        act(31, V::CallParent, O::Phone, "phone", Study),
        Action { index: DO_NOTHING, verb: V::None, object: O::None, device: "nothing", place: Place::Nowhere },
    ]
};

/// The fixed action set, in table order with devices left to right.
pub fn action_catalog() -> &'static [Action] {
    &CATALOG
}

pub fn action_by_index(i: usize) -> Result<&'static Action, HomeError> {
    CATALOG.get(i).ok_or(HomeError::ActionIndex(i))
}

/// Looks up the catalog entry for a (verb, device, place) triple.
pub fn find_action(verb: Verb, device: &str, place: Place) -> Option<&'static Action> {
    CATALOG.iter().find(|a| a.verb == verb && a.device == device && a.place == place)
}

/// `index;verb;device;place` lines, one per action.
pub fn catalog_csv() -> String {
    let mut out = String::new();
    for a in &CATALOG {
        out.push_str(&format!("{};{};{};{}\n", a.index, a.verb, a.device, a.place));
    }
    out
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} {} {}", self.verb, self.device, self.place)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorSpec {
    pub id: String,
    pub room: Room,
    pub kind: SensorKind,
    pub lo: f64,
    pub hi: f64,
    pub cell_x: u32,
    pub cell_y: u32,
}

impl SensorSpec {
    pub fn is_presence(&self) -> bool {
        self.id.contains("_presence")
    }

    pub fn midpoint(&self) -> f64 {
        match self.kind {
            SensorKind::Binary => 0.0,
            _ => self.lo + (self.hi - self.lo) / 2.0,
        }
    }

    /// Reading mapped to [0, 1]; binary readings pass through.
    pub fn normalized(&self, value: f64) -> f64 {
        ((value - self.lo) / (self.hi - self.lo)).clamp(0.0, 1.0)
    }

    pub fn accepts(&self, value: f64) -> bool {
        match self.kind {
            SensorKind::Binary => value == 0.0 || value == 1.0,
            _ => value.is_finite() && value >= self.lo && value <= self.hi,
        }
    }
}

/// The sensor inventory of a home. Order follows the manifest file.
#[derive(Debug, Clone, PartialEq)]
pub struct SensorManifest {
    sensors: Vec<SensorSpec>,
    index: HashMap<String, usize>,
}

const REFERENCE_MANIFEST: &str = include_str!("../data/sensors.txt");

impl SensorManifest {
    /// Parses `id;room;kind;lo;hi;cell_x;cell_y` records. Blank lines and `#`
    /// comments are skipped. Binary sensors must declare the range 0;1.
    pub fn parse(text: &str) -> Result<Self, HomeError> {
        let mut sensors = Vec::new();
        let mut index = HashMap::new();
        let mut slots = HashSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = n + 1;
            let body = raw.split('#').next().unwrap_or("").trim();
            if body.is_empty() {
                continue;
            }
            let err = |message: String| HomeError::Manifest { line, message };
            let f: Vec<&str> = body.split(';').map(str::trim).collect();
            if f.len() != 7 {
                return Err(err(format!("expected 7 fields, found {}", f.len())));
            }
            let room = Room::parse(f[1]).map_err(|e| err(e.to_string()))?;
            let kind = SensorKind::parse(f[2]).map_err(|e| err(e.to_string()))?;
            let num = |s: &str| s.parse::<f64>().map_err(|_| err(format!("bad number `{s}`")));
            let (lo, hi) = (num(f[3])?, num(f[4])?);
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return Err(err(format!("range [{lo}; {hi}] is empty")));
            }
            if kind == SensorKind::Binary && (lo != 0.0 || hi != 1.0) {
                return Err(err("binary sensors use the range 0;1".into()));
            }
            let cell = |s: &str| s.parse::<u32>().map_err(|_| err(format!("bad cell `{s}`")));
            let (cell_x, cell_y) = (cell(f[5])?, cell(f[6])?);
            if !slots.insert((cell_x, cell_y)) {
                return Err(err(format!("slot ({cell_x}, {cell_y}) already used")));
            }
            if index.insert(f[0].to_string(), sensors.len()).is_some() {
                return Err(err(format!("duplicate sensor id `{}`", f[0])));
            }
            sensors.push(SensorSpec { id: f[0].to_string(), room, kind, lo, hi, cell_x, cell_y });
        }
        if sensors.is_empty() {
            return Err(HomeError::Manifest { line: 0, message: "no sensors".into() });
        }
        Ok(SensorManifest { sensors, index })
    }

    /// The bundled 81-sensor inventory.
    pub fn reference() -> Arc<SensorManifest> {
        static REF: OnceLock<Arc<SensorManifest>> = OnceLock::new();
        REF.get_or_init(|| Arc::new(SensorManifest::parse(REFERENCE_MANIFEST).expect("bundled manifest is valid")))
            .clone()
    }

    pub fn reference_text() -> &'static str {
        REFERENCE_MANIFEST
    }

    pub fn len(&self) -> usize {
        self.sensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sensors.is_empty()
    }

    pub fn sensors(&self) -> &[SensorSpec] {
        &self.sensors
    }

    pub fn get(&self, id: &str) -> Option<&SensorSpec> {
        self.index.get(id).map(|&i| &self.sensors[i])
    }

    pub fn contains(&self, id: &str) -> bool {
        self.index.contains_key(id)
    }

    pub fn in_room(&self, room: Room) -> impl Iterator<Item = &SensorSpec> {
        self.sensors.iter().filter(move |s| s.room == room)
    }

    pub fn presence_sensors(&self, room: Room) -> impl Iterator<Item = &SensorSpec> {
        self.in_room(room).filter(|s| s.is_presence())
    }

    pub fn count_kind(&self, kind: SensorKind) -> usize {
        self.sensors.iter().filter(|s| s.kind == kind).count()
    }
}

/// What the agent can observe: last-known readings plus the pending command.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvState {
    pub readings: BTreeMap<String, f64>,
    pub command: VoiceCommand,
    pub timestamp: i64,
}

impl EnvState {
    pub fn new(timestamp: i64) -> Self {
        EnvState { readings: BTreeMap::new(), command: VoiceCommand::NONE, timestamp }
    }

    /// Every sensor at its cold-start default.
    pub fn defaults(manifest: &SensorManifest, timestamp: i64) -> Self {
        let readings = manifest.sensors().iter().map(|s| (s.id.clone(), s.midpoint())).collect();
        EnvState { readings, command: VoiceCommand::NONE, timestamp }
    }

    pub fn reading(&self, id: &str) -> Option<f64> {
        self.readings.get(id).copied()
    }
}

/// Ground truth attached to a generated sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct AnnotatedState {
    pub location: Room,
    pub activity: Activity,
    pub command: VoiceCommand,
    pub expected_action: usize,
}

impl AnnotatedState {
    pub fn key(&self) -> (Room, Activity, VoiceCommand) {
        (self.location, self.activity, self.command)
    }
}

/// Every annotated (location, activity, command) triple the generator can draw.
pub fn annotated_space() -> Vec<(Room, Activity, VoiceCommand)> {
    let mut out = Vec::new();
    for &room in Room::ALL {
        for &activity in room.activities() {
            for &cmd in VoiceCommand::vocabulary() {
                out.push((room, activity, cmd));
            }
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    Missing(String),
    OutOfRange { id: String, value: f64 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::Missing(id) => write!(f, "missing reading for `{id}`"),
            Violation::OutOfRange { id, value } => write!(f, "reading {value} out of range for `{id}`"),
        }
    }
}

/// Checks that `s` carries an in-domain reading for every profile sensor.
/// Readings for ids outside the profile are ignored.
pub fn validate_state(s: &EnvState, profile: &SensorManifest) -> Result<(), Vec<Violation>> {
    let mut violations = Vec::new();
    for spec in profile.sensors() {
        match s.readings.get(&spec.id) {
            None => violations.push(Violation::Missing(spec.id.clone())),
            Some(&v) if !spec.accepts(v) => violations.push(Violation::OutOfRange { id: spec.id.clone(), value: v }),
            Some(_) => {}
        }
    }
    if violations.is_empty() {
        Ok(())
    } else {
        Err(violations)
    }
}
