//! Recorded corpora on disk: one directory per participant holding a
//! `timestamp;value` CSV per sensor, `command.csv` (`timestamp;verb;object`)
//! and `action.csv` (`timestamp;index`). Semicolon separated, no header.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use thiserror::Error;

use crate::home::{action_by_index, EnvState, Object, SensorManifest, Verb, VoiceCommand, ACTION_COUNT};
use crate::world::{window_samples, Sample, SyntheticWorld, WINDOW_LEN, WINDOW_STEP};

pub const COMMAND_FILE: &str = "command.csv";
pub const ACTION_FILE: &str = "action.csv";
/// Largest command/action timestamp gap still paired during alignment.
pub const MATCH_TOLERANCE: i64 = 2;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{dir}: missing annotation files: {}", .files.join(", "))]
    MissingAnnotations { dir: PathBuf, files: Vec<String> },
    #[error("{file}:{line}: {message}")]
    Parse { file: PathBuf, line: usize, message: String },
    #[error("{path}: {source}")]
    Io { path: PathBuf, source: std::io::Error },
    #[error("cross-validation needs at least 2 participants, found {0}")]
    TooFewParticipants(usize),
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io { path: path.to_path_buf(), source }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SensorEventStream {
    pub sensor_id: String,
    /// Non-decreasing timestamps.
    pub events: Vec<(i64, f64)>,
}

impl SensorEventStream {
    /// Last value at or before `t`.
    pub fn value_at(&self, t: i64) -> Option<f64> {
        let n = self.events.partition_point(|&(ts, _)| ts <= t);
        n.checked_sub(1).map(|i| self.events[i].1)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticipantStreams {
    pub participant: String,
    /// One entry per manifest sensor, in manifest order; missing files give
    /// empty streams.
    pub streams: Vec<SensorEventStream>,
    pub commands: Vec<(i64, VoiceCommand)>,
    pub actions: Vec<(i64, usize)>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub participants: Vec<ParticipantStreams>,
}

fn read_rows(path: &Path, fields: usize) -> Result<Vec<(usize, Vec<String>)>, CorpusError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    let mut rows = Vec::new();
    for (n, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() {
            continue;
        }
        let cols: Vec<String> = line.split(';').map(|c| c.trim().to_string()).collect();
        if cols.len() != fields {
            return Err(CorpusError::Parse {
                file: path.to_path_buf(),
                line: n + 1,
                message: format!("expected {fields} fields, found {}", cols.len()),
            });
        }
        rows.push((n + 1, cols));
    }
    Ok(rows)
}

/// Parses rows, checks timestamps never go backwards and maps each row.
fn parse_timed<T>(
    path: &Path,
    fields: usize,
    mut f: impl FnMut(&[String]) -> Result<T, String>,
) -> Result<Vec<(i64, T)>, CorpusError> {
    let mut out: Vec<(i64, T)> = Vec::new();
    for (line, cols) in read_rows(path, fields)? {
        let err = |message: String| CorpusError::Parse { file: path.to_path_buf(), line, message };
        let t: i64 = cols[0].parse().map_err(|_| err(format!("bad timestamp `{}`", cols[0])))?;
        if let Some(&(prev, _)) = out.last() {
            if t < prev {
                return Err(err(format!("timestamp {t} goes back from {prev}")));
            }
        }
        out.push((t, f(&cols).map_err(err)?));
    }
    Ok(out)
}

fn load_participant(dir: &Path, name: &str, manifest: &SensorManifest) -> Result<ParticipantStreams, CorpusError> {
    let missing: Vec<String> =
        [COMMAND_FILE, ACTION_FILE].iter().filter(|f| !dir.join(f).is_file()).map(|f| f.to_string()).collect();
    if !missing.is_empty() {
        return Err(CorpusError::MissingAnnotations { dir: dir.to_path_buf(), files: missing });
    }
    let commands = parse_timed(&dir.join(COMMAND_FILE), 3, |c| {
        let verb = Verb::parse(&c[1]).map_err(|e| e.to_string())?;
        let object = Object::parse(&c[2]).map_err(|e| e.to_string())?;
        Ok(VoiceCommand::new(verb, object))
    })?;
    let actions = parse_timed(&dir.join(ACTION_FILE), 2, |c| {
        let i: usize = c[1].parse().map_err(|_| format!("bad action index `{}`", c[1]))?;
        action_by_index(i).map(|a| a.index).map_err(|e| e.to_string())
    })?;
    let mut streams = Vec::with_capacity(manifest.len());
    for spec in manifest.sensors() {
        let path = dir.join(format!("{}.csv", spec.id));
        let events = if path.is_file() {
            parse_timed(&path, 2, |c| {
                let v: f64 = c[1].parse().map_err(|_| format!("bad value `{}`", c[1]))?;
                if spec.accepts(v) {
                    Ok(v)
                } else {
                    Err(format!("value {v} outside the domain of `{}`", spec.id))
                }
            })?
        } else {
            log::warn!("{}: no stream for `{}`; it holds its default value", dir.display(), spec.id);
            Vec::new()
        };
        streams.push(SensorEventStream { sensor_id: spec.id.clone(), events });
    }
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("");
        let is_csv = path.extension().is_some_and(|e| e == "csv");
        if is_csv && !manifest.contains(stem) && stem != "command" && stem != "action" {
            log::warn!("{}: `{}` matches no sensor; ignored", dir.display(), path.display());
        }
    }
    Ok(ParticipantStreams { participant: name.to_string(), streams, commands, actions })
}

/// Loads every participant subdirectory, sorted by name. A directory with
/// no subdirectories is read as a single participant.
pub fn load_corpus(dir: impl AsRef<Path>, manifest: &SensorManifest) -> Result<Corpus, CorpusError> {
    let dir = dir.as_ref();
    let mut subdirs = Vec::new();
    for entry in fs::read_dir(dir).map_err(io_err(dir))? {
        let path = entry.map_err(io_err(dir))?.path();
        if path.is_dir() {
            subdirs.push(path);
        }
    }
    subdirs.sort();
    let mut participants = Vec::new();
    if subdirs.is_empty() {
        let name = dir.file_name().and_then(|n| n.to_str()).unwrap_or("participant");
        participants.push(load_participant(dir, name, manifest)?);
    } else {
        for sub in &subdirs {
            let name = sub.file_name().and_then(|n| n.to_str()).unwrap_or_default();
            participants.push(load_participant(sub, name, manifest)?);
        }
    }
    Ok(Corpus { participants })
}

/// Windowed samples for every command that has an action annotation within
/// the match tolerance; the rest are dropped with a warning.
pub fn align(p: &ParticipantStreams, manifest: &SensorManifest) -> Vec<Sample> {
    let mut used = vec![false; p.actions.len()];
    let mut out = Vec::with_capacity(p.commands.len() * WINDOW_LEN);
    for &(t, command) in &p.commands {
        let best = p
            .actions
            .iter()
            .enumerate()
            .filter(|(i, (ta, _))| !used[*i] && (ta - t).abs() <= MATCH_TOLERANCE)
            .min_by_key(|(_, (ta, _))| (ta - t).abs());
        let Some((i, &(_, expected))) = best else {
            log::warn!("{}: command at {t} has no action annotation; dropped", p.participant);
            continue;
        };
        used[i] = true;
        debug_assert!(expected < ACTION_COUNT);
        let state_at = |ts: i64, cmd: VoiceCommand| {
            let mut s = EnvState::new(ts);
            s.command = cmd;
            for (spec, stream) in manifest.sensors().iter().zip(&p.streams) {
                s.readings.insert(spec.id.clone(), stream.value_at(ts).unwrap_or_else(|| spec.midpoint()));
            }
            s
        };
        let sample = Sample {
            state: state_at(t, command),
            expected,
            annotation: None,
            participant: Some(p.participant.clone()),
        };
        let [a, b, _] = window_samples(&sample);
        out.push(Sample { state: state_at(a.state.timestamp, VoiceCommand::NONE), ..a });
        out.push(Sample { state: state_at(b.state.timestamp, VoiceCommand::NONE), ..b });
        out.push(sample);
    }
    out
}

pub fn align_corpus(corpus: &Corpus, manifest: &SensorManifest) -> Vec<Sample> {
    corpus.participants.iter().flat_map(|p| align(p, manifest)).collect()
}

/// Writes command samples for one participant. Sensor values are recorded
/// at the start of each command window and only when they change, so
/// aligning the files reproduces the windows of `samples`.
pub fn write_participant(
    dir: impl AsRef<Path>,
    samples: &[Sample],
    manifest: &SensorManifest,
) -> Result<(), CorpusError> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let mut sensors: Vec<String> = vec![String::new(); manifest.len()];
    let mut last: Vec<Option<f64>> = vec![None; manifest.len()];
    let (mut commands, mut actions) = (String::new(), String::new());
    for s in samples {
        let t = s.state.timestamp;
        let start = t - (WINDOW_LEN as i64 - 1) * WINDOW_STEP;
        for (i, spec) in manifest.sensors().iter().enumerate() {
            let v = s.state.readings.get(&spec.id).copied().unwrap_or_else(|| spec.midpoint());
            if last[i] != Some(v) {
                let _ = writeln!(sensors[i], "{start};{v}");
                last[i] = Some(v);
            }
        }
        let _ = writeln!(commands, "{t};{};{}", s.state.command.verb, s.state.command.object);
        let _ = writeln!(actions, "{t};{}", s.expected);
    }
    let write = |name: &str, body: &str| {
        let path = dir.join(name);
        fs::write(&path, body).map_err(io_err(&path))
    };
    for (spec, body) in manifest.sensors().iter().zip(&sensors) {
        write(&format!("{}.csv", spec.id), body)?;
    }
    write(COMMAND_FILE, &commands)?;
    write(ACTION_FILE, &actions)
}

/// Participant names `p01`, `p02`, ...
pub fn participant_name(i: usize) -> String {
    format!("p{:02}", i + 1)
}

/// Generates `commands` samples per participant, spaced so their windows
/// never overlap. Participant `i` uses seed `seed + i`.
pub fn generate_participants(
    world: &SyntheticWorld,
    participants: usize,
    commands: usize,
    seed: u64,
) -> Vec<(String, Vec<Sample>)> {
    (0..participants)
        .map(|i| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(i as u64));
            let name = participant_name(i);
            let samples = (0..commands)
                .map(|k| {
                    let mut s = world.sample(10 + 5 * k as i64, &mut rng);
                    s.participant = Some(name.clone());
                    s
                })
                .collect();
            (name, samples)
        })
        .collect()
}

pub fn write_fixture(
    dir: impl AsRef<Path>,
    world: &SyntheticWorld,
    participants: usize,
    commands: usize,
    seed: u64,
) -> Result<(), CorpusError> {
    for (name, samples) in generate_participants(world, participants, commands, seed) {
        write_participant(dir.as_ref().join(name), &samples, world.manifest())?;
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct Fold {
    pub held_out: String,
    pub adaptation: Vec<Sample>,
    pub test: Vec<Sample>,
}

/// One fold per participant, in name order.
pub fn losocv_folds(samples: &[Sample]) -> Result<Vec<Fold>, CorpusError> {
    let mut by: BTreeMap<&str, Vec<&Sample>> = BTreeMap::new();
    for s in samples {
        by.entry(s.participant.as_deref().unwrap_or("")).or_default().push(s);
    }
    if by.len() < 2 {
        return Err(CorpusError::TooFewParticipants(by.len()));
    }
    Ok(by
        .keys()
        .map(|&held| Fold {
            held_out: held.to_string(),
            adaptation: samples.iter().filter(|s| s.participant.as_deref().unwrap_or("") != held).cloned().collect(),
            test: by[held].iter().map(|&s| s.clone()).collect(),
        })
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::home::DO_NOTHING;
    use crate::world::GeneratorConfig;
    use proptest::prelude::*;

    fn world() -> SyntheticWorld {
        SyntheticWorld::reference(GeneratorConfig::default()).unwrap()
    }

    #[test]
    fn round_trip_reproduces_windows() {
        let dir = tempfile::tempdir().unwrap();
        let w = world();
        write_fixture(dir.path(), &w, 2, 12, 40).unwrap();
        let corpus = load_corpus(dir.path(), w.manifest()).unwrap();
        assert_eq!(corpus.participants.len(), 2);
        let aligned = align_corpus(&corpus, w.manifest());
        let mut expected = Vec::new();
        for (_, samples) in generate_participants(&w, 2, 12, 40) {
            for s in samples {
                for mut x in window_samples(&s) {
                    x.annotation = None;
                    expected.push(x);
                }
            }
        }
        assert_eq!(aligned, expected);
    }

    #[test]
    fn empty_directory_lists_both_annotations() {
        let dir = tempfile::tempdir().unwrap();
        let err = load_corpus(dir.path(), &SensorManifest::reference()).unwrap_err();
        match err {
            CorpusError::MissingAnnotations { files, .. } => assert_eq!(files, vec![COMMAND_FILE, ACTION_FILE]),
            other => panic!("{other}"),
        }
    }

    #[test]
    fn timestamp_regression_names_the_line() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(COMMAND_FILE), "10;turn_on;light\n").unwrap();
        fs::write(dir.path().join(ACTION_FILE), "10;0\n").unwrap();
        fs::write(dir.path().join("kitchen_co2.csv"), "1;400\n5;500\n3;450\n").unwrap();
        match load_corpus(dir.path(), &SensorManifest::reference()).unwrap_err() {
            CorpusError::Parse { line, file, .. } => {
                assert_eq!(line, 3);
                assert!(file.ends_with("kitchen_co2.csv"));
            }
            other => panic!("{other}"),
        }
    }

    #[test]
    fn out_of_domain_and_malformed_rows() {
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(COMMAND_FILE), "10;turn_on;light\n").unwrap();
        fs::write(dir.path().join(ACTION_FILE), "10;0\n").unwrap();
        fs::write(dir.path().join("kitchen_window.csv"), "1;0.5\n").unwrap();
        assert!(matches!(
            load_corpus(dir.path(), &SensorManifest::reference()),
            Err(CorpusError::Parse { line: 1, .. })
        ));
        fs::write(dir.path().join("kitchen_window.csv"), "1;1;2\n").unwrap();
        assert!(matches!(
            load_corpus(dir.path(), &SensorManifest::reference()),
            Err(CorpusError::Parse { line: 1, .. })
        ));
        fs::write(dir.path().join("kitchen_window.csv"), "1;1\n").unwrap();
        fs::write(dir.path().join(ACTION_FILE), "10;40\n").unwrap();
        assert!(load_corpus(dir.path(), &SensorManifest::reference()).is_err());
    }

    #[test]
    fn sample_and_hold_and_defaults() {
        let m = SensorManifest::reference();
        let dir = tempfile::tempdir().unwrap();
        fs::write(dir.path().join(COMMAND_FILE), "20;open;blinds\n30;close;blinds\n").unwrap();
        fs::write(dir.path().join(ACTION_FILE), "21;16\n").unwrap();
        fs::write(dir.path().join("kitchen_co2.csv"), "10;1234\n").unwrap();
        let corpus = load_corpus(dir.path(), &m).unwrap();
        let samples = align(&corpus.participants[0], &m);
        // The second command has no annotation within tolerance.
        assert_eq!(samples.len(), 3);
        assert_eq!(samples[2].expected, 16);
        assert_eq!(samples[0].expected, DO_NOTHING);
        for s in &samples {
            assert_eq!(s.state.readings["kitchen_co2"], 1234.0);
            assert_eq!(s.state.readings["kitchen_temperature"], 20.0);
            assert_eq!(s.state.readings["kitchen_window"], 0.0);
        }
        assert_eq!(samples[2].state.command, VoiceCommand::new(Verb::Open, Object::Blinds));
        assert!(samples[0].state.command.is_none());
    }

    #[test]
    fn single_participant_has_no_folds() {
        let w = world();
        let (_, samples) = generate_participants(&w, 1, 3, 0).remove(0);
        assert!(matches!(losocv_folds(&samples), Err(CorpusError::TooFewParticipants(1))));
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(32))]
        #[test]
        fn folds_partition(participants in 2usize..7, per in 1usize..5) {
            let w = world();
            let samples: Vec<Sample> = generate_participants(&w, participants, per, 3).into_iter().flat_map(|(_, s)| s).collect();
            let folds = losocv_folds(&samples).unwrap();
            prop_assert_eq!(folds.len(), participants);
            let mut tested = Vec::new();
            for f in &folds {
                prop_assert!(f.adaptation.iter().all(|s| s.participant.as_deref() != Some(f.held_out.as_str())));
                prop_assert!(f.test.iter().all(|s| s.participant.as_deref() == Some(f.held_out.as_str())));
                prop_assert_eq!(f.adaptation.len() + f.test.len(), samples.len());
                tested.push(f.held_out.clone());
            }
            tested.sort();
            tested.dedup();
            prop_assert_eq!(tested.len(), participants);
        }
    }
}
