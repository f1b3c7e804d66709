//! Trajectory dataset ingestion, normalization, and CSV exports.
//!
//! External trajectory files are normalized to model units (meters,
//! positions increasing downstream) and resampled onto the 0.5 s step grid
//! before they reach the calibration pipeline. All exports are UTF-8 with
//! LF line endings and period decimal separators; floats are printed in
//! shortest round-trip form.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use thiserror::Error;

use crate::calibration::{SpacingVelocitySample, SurfaceCell};
use crate::dynamics::{Trajectory, DT_SECONDS};

/// Feet to meters.
pub const FOOT_IN_METERS: f64 = 0.3048;
/// Frame period of NGSIM-style recordings, seconds.
pub const NGSIM_FRAME_SECONDS: f64 = 0.1;

/// One observation of one vehicle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Obs {
    /// Time in seconds.
    pub t: f64,
    /// Longitudinal position along the lane, meters.
    pub x: f64,
    /// Instantaneous speed channel of the source if present, m/s.
    /// Model computations always use position differences instead.
    pub v: Option<f64>,
    pub lane: Option<i64>,
    /// Immediately preceding vehicle in the same lane, if known.
    pub preceding: Option<u64>,
}

/// A normalized trajectory dataset: per-vehicle observations sorted by
/// time, all positions in meters.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Dataset {
    tracks: BTreeMap<u64, Vec<Obs>>,
    /// Uniform grid step in seconds when the dataset is on one.
    pub dt_seconds: Option<f64>,
}

impl Dataset {
    pub fn tracks(&self) -> &BTreeMap<u64, Vec<Obs>> {
        &self.tracks
    }

    pub fn insert_track(&mut self, vehicle: u64, mut obs: Vec<Obs>) {
        obs.sort_by(|a, b| a.t.partial_cmp(&b.t).unwrap());
        self.tracks.insert(vehicle, obs);
    }

    pub fn is_empty(&self) -> bool {
        self.tracks.values().all(|t| t.is_empty())
    }

    pub fn total_observations(&self) -> usize {
        self.tracks.values().map(|t| t.len()).sum()
    }

    /// True when every observation sits on the model grid (0.5 s steps).
    pub fn on_model_grid(&self) -> bool {
        self.dt_seconds == Some(DT_SECONDS)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Format {
    /// `vehicle_id,t,x[,v,lane,leader_id]`, t in seconds, x in meters.
    Internal,
    /// NGSIM-style export: vehicle id, frame, longitudinal position in
    /// feet, lane, preceding vehicle id. Frames are 0.1 s apart.
    Ngsim,
}

#[derive(Debug, Error)]
pub enum IoError {
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("csv: {0}")]
    Csv(#[from] csv::Error),
    #[error("missing required column '{column}'")]
    MissingColumn { column: &'static str },
    #[error("line {line}: bad value '{value}' for {what}")]
    BadValue {
        line: u64,
        what: &'static str,
        value: String,
    },
    #[error("vehicle {vehicle}: time stamps are not strictly increasing")]
    NonMonotoneTime { vehicle: u64 },
    #[error(
        "source time step unknown; resample a dataset with at least two observations per vehicle"
    )]
    UnknownSourceDt,
    #[error("dataset has no observations")]
    EmptyDataset,
}

/// Counts of rows touched by normalization during a load.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct LoadStats {
    pub rows: usize,
    /// Preceding-vehicle links severed because the claimed leader was not
    /// observed at that instant, sat in another lane, or was not ahead.
    pub broken_leader_links: usize,
}

/// Loads a trajectory file. NGSIM positions are converted from feet to
/// meters; preceding-vehicle links that contradict the data are severed
/// (counted in the stats) rather than trusted.
pub fn load_trajectories(
    path: impl AsRef<Path>,
    format: Format,
) -> Result<(Dataset, LoadStats), IoError> {
    let file = File::open(path.as_ref())?;
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(file);
    let headers = rdr.headers()?.clone();
    let norm = |h: &str| -> String {
        h.chars()
            .filter(|c| c.is_ascii_alphanumeric())
            .collect::<String>()
            .to_ascii_lowercase()
    };
    let find = |names: &[&str]| -> Option<usize> {
        headers
            .iter()
            .position(|h| names.iter().any(|n| norm(h) == *n))
    };
    let require = |names: &[&str], column: &'static str| -> Result<usize, IoError> {
        find(names).ok_or(IoError::MissingColumn { column })
    };

    struct Columns {
        id: usize,
        t: usize,
        x: usize,
        v: Option<usize>,
        lane: Option<usize>,
        preceding: Option<usize>,
        time_is_frames: bool,
        unit: f64,
    }
    let cols = match format {
        Format::Internal => Columns {
            id: require(&["vehicleid", "car", "id"], "vehicle_id")?,
            t: require(&["t", "time"], "t")?,
            x: require(&["x", "position"], "x")?,
            v: find(&["v", "speed"]),
            lane: find(&["lane", "laneid"]),
            preceding: find(&["leaderid", "preceding"]),
            time_is_frames: false,
            unit: 1.0,
        },
        Format::Ngsim => Columns {
            id: require(&["vehicleid"], "Vehicle_ID")?,
            t: require(&["frameid"], "Frame_ID")?,
            x: require(&["localy"], "Local_Y")?,
            v: find(&["vvel"]),
            lane: find(&["laneid"]),
            preceding: find(&["preceding"]),
            time_is_frames: true,
            unit: FOOT_IN_METERS,
        },
    };

    let mut tracks: BTreeMap<u64, Vec<Obs>> = BTreeMap::new();
    let mut rows = 0usize;
    for record in rdr.records() {
        let record = record?;
        let line = record.position().map(|p| p.line()).unwrap_or(0);
        let field = |i: usize| record.get(i).unwrap_or("");
        let bad = |what: &'static str, value: &str| IoError::BadValue {
            line,
            what,
            value: value.to_string(),
        };
        let id: u64 = field(cols.id)
            .parse()
            .map_err(|_| bad("vehicle id", field(cols.id)))?;
        let raw_t: f64 = field(cols.t)
            .parse()
            .map_err(|_| bad("time", field(cols.t)))?;
        let t = if cols.time_is_frames {
            raw_t * NGSIM_FRAME_SECONDS
        } else {
            raw_t
        };
        let x: f64 = field(cols.x)
            .parse::<f64>()
            .map_err(|_| bad("position", field(cols.x)))?
            * cols.unit;
        let opt_f64 =
            |i: Option<usize>| -> Option<f64> { i.and_then(|i| field(i).parse::<f64>().ok()) };
        let v = opt_f64(cols.v).map(|v| v * cols.unit);
        let lane = cols.lane.and_then(|i| field(i).parse::<i64>().ok());
        let preceding = cols
            .preceding
            .and_then(|i| field(i).parse::<u64>().ok())
            .filter(|&p| p != 0);
        tracks.entry(id).or_default().push(Obs {
            t,
            x,
            v,
            lane,
            preceding,
        });
        rows += 1;
    }
    for obs in tracks.values_mut() {
        obs.sort_by(|a, b| a.t.partial_cmp(&b.t).unwrap());
    }

    let broken_leader_links = sever_bad_leader_links(&mut tracks);
    let mut dataset = Dataset {
        tracks,
        dt_seconds: None,
    };
    dataset.dt_seconds = detect_uniform_dt(&dataset);
    Ok((
        dataset,
        LoadStats {
            rows,
            broken_leader_links,
        },
    ))
}

/// Drops preceding links whose leader is absent at that instant, in a
/// different lane, or not strictly ahead. Returns the number severed.
fn sever_bad_leader_links(tracks: &mut BTreeMap<u64, Vec<Obs>>) -> usize {
    let mut at_time: HashMap<(u64, u64), (f64, Option<i64>)> = HashMap::new();
    for (&id, obs) in tracks.iter() {
        for o in obs {
            at_time.insert((o.t.to_bits(), id), (o.x, o.lane));
        }
    }
    let mut severed = 0;
    for obs in tracks.values_mut() {
        for o in obs.iter_mut() {
            if let Some(p) = o.preceding {
                let ok = match at_time.get(&(o.t.to_bits(), p)) {
                    Some(&(px, plane)) => px > o.x && plane == o.lane,
                    None => false,
                };
                if !ok {
                    o.preceding = None;
                    severed += 1;
                }
            }
        }
    }
    severed
}

/// The common positive time step when one exists (within 1e-9 s).
fn detect_uniform_dt(dataset: &Dataset) -> Option<f64> {
    let mut dt: Option<f64> = None;
    for obs in dataset.tracks.values() {
        for pair in obs.windows(2) {
            let d = pair[1].t - pair[0].t;
            if d <= 0.0 {
                return None;
            }
            match dt {
                None => dt = Some(d),
                Some(cur) if (cur - d).abs() > 1e-9 => return None,
                _ => {}
            }
        }
    }
    dt
}

/// Resamples every track onto the `target_dt` grid by linear interpolation
/// of positions, recomputing velocities as forward differences. Tracks are
/// clipped to their observed span. A dataset already on the grid is
/// returned unchanged.
pub fn resample(dataset: &Dataset, target_dt: f64) -> Result<Dataset, IoError> {
    for (&vehicle, obs) in dataset.tracks.iter() {
        if obs.windows(2).any(|w| w[1].t <= w[0].t) {
            return Err(IoError::NonMonotoneTime { vehicle });
        }
    }
    if dataset.is_empty() {
        return Err(IoError::EmptyDataset);
    }

    let on_grid = dataset.tracks.values().all(|obs| {
        obs.iter().all(|o| {
            let k = (o.t / target_dt).round();
            (o.t - k * target_dt).abs() <= 1e-9
        }) && obs
            .windows(2)
            .all(|w| ((w[1].t - w[0].t) - target_dt).abs() <= 1e-9)
    });
    if on_grid {
        let mut out = dataset.clone();
        out.dt_seconds = Some(target_dt);
        return Ok(out);
    }
    if dataset.dt_seconds.is_none() && dataset.tracks.values().all(|obs| obs.len() < 2) {
        return Err(IoError::UnknownSourceDt);
    }

    let mut out = Dataset {
        tracks: BTreeMap::new(),
        dt_seconds: Some(target_dt),
    };
    for (&vehicle, obs) in dataset.tracks.iter() {
        if obs.is_empty() {
            continue;
        }
        let t_first = obs[0].t;
        let t_last = obs[obs.len() - 1].t;
        let k_first = ((t_first / target_dt) - 1e-9).ceil() as i64;
        let k_last = ((t_last / target_dt) + 1e-9).floor() as i64;
        if k_last < k_first {
            continue;
        }
        let mut resampled = Vec::with_capacity((k_last - k_first + 1) as usize);
        let mut cursor = 0usize;
        for k in k_first..=k_last {
            let t = k as f64 * target_dt;
            while cursor + 1 < obs.len() && obs[cursor + 1].t <= t {
                cursor += 1;
            }
            let x = if cursor + 1 < obs.len() && obs[cursor].t < t {
                let (a, b) = (&obs[cursor], &obs[cursor + 1]);
                a.x + (b.x - a.x) * ((t - a.t) / (b.t - a.t))
            } else {
                obs[cursor].x
            };
            // Lane and leader context of the last source observation at or
            // before the grid instant.
            resampled.push(Obs {
                t,
                x,
                v: None,
                lane: obs[cursor].lane,
                preceding: obs[cursor].preceding,
            });
        }
        for i in 0..resampled.len().saturating_sub(1) {
            resampled[i].v = Some((resampled[i + 1].x - resampled[i].x) / target_dt);
        }
        out.tracks.insert(vehicle, resampled);
    }
    if out.is_empty() {
        return Err(IoError::EmptyDataset);
    }
    Ok(out)
}

/// Builds an in-memory dataset from a simulated trajectory (cars are
/// numbered from 1, front car first; times are step multiples of 0.5 s).
pub fn dataset_from_trajectory(traj: &Trajectory) -> Dataset {
    let mut dataset = Dataset {
        tracks: BTreeMap::new(),
        dt_seconds: Some(traj.dt_seconds),
    };
    for car in 0..traj.cars() {
        let obs: Vec<Obs> = (0..=traj.steps())
            .map(|t| Obs {
                t: t as f64 * traj.dt_seconds,
                x: traj.position(car, t),
                v: None,
                lane: None,
                preceding: if car > 0 { Some(car as u64) } else { None },
            })
            .collect();
        dataset.tracks.insert(car as u64 + 1, obs);
    }
    dataset
}

/// Writes a trajectory as `car,t,x,v` rows, car-major then time.
///
/// `t` is in seconds (exact multiples of the 0.5 s step), `x` in meters and
/// `v` in meters per step; the file loads back via
/// [`load_trajectories`] with bit-identical positions.
pub fn export_trajectories(traj: &Trajectory, path: impl AsRef<Path>) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "car,t,x,v")?;
    for car in 0..traj.cars() {
        for t in 0..traj.steps() {
            writeln!(
                w,
                "{},{},{},{}",
                car + 1,
                t as f64 * traj.dt_seconds,
                traj.position(car, t),
                traj.velocity(car, t)
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes calibration samples as `y_tilde,v,car,t` rows.
pub fn export_scatter(
    samples: &[SpacingVelocitySample],
    path: impl AsRef<Path>,
) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "y_tilde,v,car,t")?;
    for s in samples {
        writeln!(w, "{},{},{},{}", s.y_tilde, s.v, s.car, s.t)?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a grid-search error surface as `m,lambda,total_error,segments`.
pub fn export_surface(surface: &[SurfaceCell], path: impl AsRef<Path>) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "m,lambda,total_error,segments")?;
    for cell in surface {
        writeln!(
            w,
            "{},{},{},{}",
            cell.m, cell.lambda, cell.total_cost, cell.segments
        )?;
    }
    w.flush()?;
    Ok(())
}

/// Writes a dataset in the internal format
/// (`vehicle_id,t,x,v,lane,leader_id`; optional fields stay empty).
pub fn export_dataset(dataset: &Dataset, path: impl AsRef<Path>) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "vehicle_id,t,x,v,lane,leader_id")?;
    let fmt_opt = |o: Option<String>| o.unwrap_or_default();
    for (&id, obs) in dataset.tracks() {
        for o in obs {
            writeln!(
                w,
                "{},{},{},{},{},{}",
                id,
                o.t,
                o.x,
                fmt_opt(o.v.map(|v| v.to_string())),
                fmt_opt(o.lane.map(|l| l.to_string())),
                fmt_opt(o.preceding.map(|p| p.to_string())),
            )?;
        }
    }
    w.flush()?;
    Ok(())
}

/// Writes stationary positions as `car,x` rows.
pub fn export_positions(positions: &[f64], path: impl AsRef<Path>) -> Result<(), IoError> {
    let mut w = BufWriter::new(File::create(path)?);
    writeln!(w, "car,x")?;
    for (i, x) in positions.iter().enumerate() {
        writeln!(w, "{},{}", i + 1, x)?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::{simulate, Scenario, SpeedProfile};
    use crate::law::presets::six_segment_law;
    use approx::assert_abs_diff_eq;

    fn write_tmp(content: &str) -> (tempfile::TempDir, std::path::PathBuf) {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("data.csv");
        std::fs::write(&path, content).unwrap();
        (dir, path)
    }

    #[test]
    fn load_internal_counts_records() {
        let (_dir, path) = write_tmp(
            "vehicle_id,t,x\n1,0.0,10.0\n1,0.5,12.0\n1,1.0,14.0\n2,0.0,0.0\n2,0.5,1.5\n2,1.0,3.2\n",
        );
        let (dataset, stats) = load_trajectories(&path, Format::Internal).unwrap();
        assert_eq!(stats.rows, 6);
        assert_eq!(dataset.total_observations(), 6);
        assert_eq!(dataset.tracks().len(), 2);
        assert_eq!(dataset.dt_seconds, Some(0.5));
    }

    #[test]
    fn load_ngsim_converts_feet() {
        let (_dir, path) = write_tmp(
            "Vehicle_ID,Frame_ID,Local_Y,Lane_ID,Preceding\n7,0,100.0,2,0\n7,1,110.0,2,0\n",
        );
        let (dataset, _) = load_trajectories(&path, Format::Ngsim).unwrap();
        let obs = &dataset.tracks()[&7];
        assert_abs_diff_eq!(obs[0].x, 30.48, epsilon = 1e-12);
        assert_abs_diff_eq!(obs[1].t - obs[0].t, 0.1, epsilon = 1e-12);
        assert_eq!(obs[0].preceding, None); // 0 means no leader
    }

    #[test]
    fn load_rejects_missing_column() {
        let (_dir, path) = write_tmp("vehicle_id,t\n1,0.0\n");
        assert!(matches!(
            load_trajectories(&path, Format::Internal),
            Err(IoError::MissingColumn { column: "x" })
        ));
    }

    #[test]
    fn load_reports_bad_value_line() {
        let (_dir, path) = write_tmp("vehicle_id,t,x\n1,0.0,10.0\n1,oops,12.0\n");
        match load_trajectories(&path, Format::Internal) {
            Err(IoError::BadValue { line: 3, .. }) => {}
            other => panic!("expected BadValue on line 3, got {other:?}"),
        }
    }

    #[test]
    fn bad_leader_links_are_severed() {
        // Vehicle 2 claims leader 1, but 1 is behind it at t=0.
        let (_dir, path) = write_tmp(
            "vehicle_id,t,x,v,lane,leader_id\n1,0.0,5.0,,1,\n2,0.0,10.0,,1,1\n2,0.5,12.0,,1,9\n",
        );
        let (dataset, stats) = load_trajectories(&path, Format::Internal).unwrap();
        assert_eq!(stats.broken_leader_links, 2);
        assert!(dataset.tracks()[&2].iter().all(|o| o.preceding.is_none()));
    }

    #[test]
    fn resample_identity_when_on_grid() {
        let (_dir, path) =
            write_tmp("vehicle_id,t,x,v\n1,0.0,0.0,3.0\n1,0.5,1.5,3.0\n1,1.0,3.0,\n");
        let (dataset, _) = load_trajectories(&path, Format::Internal).unwrap();
        let out = resample(&dataset, 0.5).unwrap();
        assert_eq!(out.tracks(), dataset.tracks());
        assert!(out.on_model_grid());
    }

    #[test]
    fn resample_linear_motion_lands_on_line() {
        // x = 3 t sampled at 0.1 s.
        let mut dataset = Dataset::default();
        dataset.insert_track(
            1,
            (0..51)
                .map(|k| Obs {
                    t: k as f64 * 0.1,
                    x: 3.0 * (k as f64 * 0.1),
                    v: None,
                    lane: None,
                    preceding: None,
                })
                .collect(),
        );
        let out = resample(&dataset, 0.5).unwrap();
        let obs = &out.tracks()[&1];
        assert_eq!(obs.len(), 11);
        for o in obs {
            assert_abs_diff_eq!(o.x, 3.0 * o.t, epsilon = 1e-9);
        }
        // Forward-difference velocities: 3 m/s.
        for o in &obs[..obs.len() - 1] {
            assert_abs_diff_eq!(o.v.unwrap(), 3.0, epsilon = 1e-9);
        }
    }

    #[test]
    fn resample_clips_to_observed_span() {
        let mut dataset = Dataset::default();
        dataset.insert_track(
            4,
            (0..21)
                .map(|k| Obs {
                    t: 2.0 + k as f64 * 0.1,
                    x: k as f64,
                    v: None,
                    lane: None,
                    preceding: None,
                })
                .collect(),
        );
        let out = resample(&dataset, 0.5).unwrap();
        let times: Vec<f64> = out.tracks()[&4].iter().map(|o| o.t).collect();
        assert_eq!(times, vec![2.0, 2.5, 3.0, 3.5, 4.0]);
    }

    #[test]
    fn resample_rejects_non_monotone_time() {
        let mut dataset = Dataset::default();
        let mk = |t: f64| Obs {
            t,
            x: t,
            v: None,
            lane: None,
            preceding: None,
        };
        dataset
            .tracks
            .insert(9, vec![mk(0.0), mk(0.2), mk(0.2), mk(0.4)]);
        assert!(matches!(
            resample(&dataset, 0.5),
            Err(IoError::NonMonotoneTime { vehicle: 9 })
        ));
    }

    #[test]
    fn export_then_load_round_trips_positions() {
        let law = six_segment_law();
        let scenario = Scenario::uniform_open(
            20.0,
            3,
            SpeedProfile::new(vec![(0, 8.0), (5, 3.0)]).unwrap(),
        )
        .unwrap();
        let run = simulate(&scenario, &law, &Default::default(), 12).unwrap();
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.csv");
        export_trajectories(&run.trajectory, &path).unwrap();
        let (dataset, _) = load_trajectories(&path, Format::Internal).unwrap();
        assert!(resample(&dataset, 0.5).unwrap().on_model_grid());
        for car in 0..3 {
            let obs = &dataset.tracks()[&(car as u64 + 1)];
            assert_eq!(obs.len(), 12);
            for (t, o) in obs.iter().enumerate() {
                // Bit-identical round trip.
                assert_eq!(o.x, run.trajectory.position(car, t));
            }
        }
    }

    #[test]
    fn export_empty_trajectory_header_only() {
        let traj = Trajectory::from_positions(vec![vec![0.0]], None);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.csv");
        export_trajectories(&traj, &path).unwrap();
        assert_eq!(std::fs::read_to_string(&path).unwrap(), "car,t,x,v\n");
    }

    #[test]
    fn export_two_cars_two_steps_four_rows() {
        let traj =
            Trajectory::from_positions(vec![vec![10.0, 12.0, 14.0], vec![0.0, 1.0, 2.0]], None);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("traj.csv");
        export_trajectories(&traj, &path).unwrap();
        let content = std::fs::read_to_string(&path).unwrap();
        assert_eq!(content.lines().count(), 5); // header + 4 data rows
    }
}
