//! CSV and JSON serialization of trajectories and switching signals.

use std::fs::File;
use std::io::{Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{Drive, ModeIndex, SimplexPoint, SwitchingSignal, Trajectory};

fn fmt(v: f64) -> String {
    format!("{v:.16e}")
}

/// Header `t,x1..xn,mode|u1..uN,y1..yp`.
pub fn trajectory_header(traj: &Trajectory) -> Vec<String> {
    let mut h = vec!["t".to_string()];
    h.extend((1..=traj.dim()).map(|i| format!("x{i}")));
    match traj.drive() {
        Drive::Modes(_) => h.push("mode".into()),
        Drive::Controls(c) => {
            let n = c.first().map_or(0, SimplexPoint::dim);
            h.extend((1..=n).map(|i| format!("u{i}")));
        }
    }
    if traj.has_outputs() {
        h.extend((1..=traj.output_dim()).map(|i| format!("y{i}")));
    }
    h
}

pub fn write_trajectory<W: Write>(traj: &Trajectory, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(trajectory_header(traj))?;
    for k in 0..traj.len() {
        let mut row = vec![fmt(traj.time(k))];
        row.extend(traj.state(k).iter().map(|v| fmt(*v)));
        match traj.drive() {
            Drive::Modes(m) => row.push(m[k].get().to_string()),
            Drive::Controls(c) => row.extend(c[k].weights().iter().map(|v| fmt(*v))),
        }
        if traj.has_outputs() {
            row.extend(traj.output(k).iter().map(|v| fmt(*v)));
        }
        wr.write_record(&row)?;
    }
    wr.flush()?;
    Ok(())
}

pub fn write_trajectory_file(traj: &Trajectory, path: &Path) -> Result<()> {
    write_trajectory(traj, File::create(path)?)
}

/// Reads a trajectory written by [`write_trajectory`].
pub fn read_trajectory<R: Read>(r: R) -> Result<Trajectory> {
    let mut rd = csv::Reader::from_reader(r);
    let header: Vec<String> = rd.headers()?.iter().map(str::to_string).collect();
    let count = |p: char| header.iter().filter(|h| h.starts_with(p) && h[1..].parse::<usize>().is_ok()).count();
    let (dim, n_u, p) = (count('x'), count('u'), count('y'));
    let has_mode = header.iter().any(|h| h == "mode");
    if header.first().map(String::as_str) != Some("t") || dim == 0 || has_mode == (n_u > 0) {
        return Err(Error::Input(format!("unrecognized trajectory header {header:?}")));
    }
    let (mut times, mut states, mut outputs) = (Vec::new(), Vec::new(), Vec::new());
    let (mut modes, mut controls) = (Vec::new(), Vec::new());
    for rec in rd.records() {
        let rec = rec?;
        let num = |i: usize| -> Result<f64> {
            rec.get(i)
                .and_then(|s| s.trim().parse().ok())
                .ok_or_else(|| Error::Input(format!("bad field {i} in row {:?}", rec.position().map(|p| p.line()))))
        };
        times.push(num(0)?);
        for i in 1..=dim {
            states.push(num(i)?);
        }
        let mut col = dim + 1;
        if has_mode {
            let m = num(col)?;
            if m < 1.0 || m.fract() != 0.0 {
                return Err(Error::Input(format!("mode {m} is not a positive integer")));
            }
            modes.push(ModeIndex::of(m as usize));
            col += 1;
        } else {
            let w = (col..col + n_u).map(&num).collect::<Result<Vec<_>>>()?;
            controls.push(SimplexPoint::new(w)?);
            col += n_u;
        }
        for i in col..col + p {
            outputs.push(num(i)?);
        }
    }
    let drive = if has_mode { Drive::Modes(modes) } else { Drive::Controls(controls) };
    Trajectory::from_parts(dim, times, states, drive, p, outputs)
}

pub fn read_trajectory_file(path: &Path) -> Result<Trajectory> {
    read_trajectory(File::open(path)?)
}

/// Signal CSV `t_break,mode`. The end of the domain is not a breakpoint and
/// lives in the sidecar.
pub fn write_signal<W: Write>(sigma: &SwitchingSignal, w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record(["t_break", "mode"])?;
    for (t, m) in sigma.breakpoints().iter().zip(sigma.modes()) {
        wr.write_record([fmt(*t), m.get().to_string()])?;
    }
    wr.flush()?;
    Ok(())
}

pub fn read_signal<R: Read>(r: R, end: f64) -> Result<SwitchingSignal> {
    let mut rd = csv::Reader::from_reader(r);
    let (mut breaks, mut modes) = (Vec::new(), Vec::new());
    for rec in rd.deserialize() {
        let (t, m): (f64, usize) = rec?;
        if m == 0 {
            return Err(Error::Input("modes are 1-based".into()));
        }
        breaks.push(t);
        modes.push(ModeIndex::of(m));
    }
    SwitchingSignal::new(breaks, modes, end)
}

/// JSON sidecar of a signal file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignalSidecar {
    pub start: f64,
    pub end: f64,
    pub n_modes: usize,
    pub seed: Option<u64>,
    /// Class parameters used to generate the signal.
    pub constraint: serde_json::Value,
}

/// Writes `<stem>.csv` and `<stem>.json` into `dir`.
pub fn write_signal_bundle(dir: &Path, stem: &str, sigma: &SwitchingSignal, sidecar: &SignalSidecar) -> Result<()> {
    write_signal(sigma, File::create(dir.join(format!("{stem}.csv")))?)?;
    write_json(&dir.join(format!("{stem}.json")), sidecar)
}

pub fn read_signal_bundle(dir: &Path, stem: &str) -> Result<(SwitchingSignal, SignalSidecar)> {
    let side: SignalSidecar = serde_json::from_reader(File::open(dir.join(format!("{stem}.json")))?)?;
    let sigma = read_signal(File::open(dir.join(format!("{stem}.csv")))?, side.end)?;
    Ok((sigma, side))
}

pub fn write_json<T: Serialize + ?Sized>(path: &Path, value: &T) -> Result<()> {
    let mut f = File::create(path)?;
    serde_json::to_writer_pretty(&mut f, value)?;
    f.write_all(b"\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sample(relaxed: bool) -> Trajectory {
        let drive = if relaxed {
            Drive::Controls(vec![SimplexPoint::new(vec![0.25, 0.75]).unwrap(); 3])
        } else {
            Drive::Modes(vec![ModeIndex::of(1), ModeIndex::of(2), ModeIndex::of(2)])
        };
        let states = vec![1.0, -0.1, 0.1 + 0.2, 1e-300, std::f64::consts::PI, -2.5e7];
        Trajectory::from_parts(2, vec![0.0, 0.1, 0.30000000000000004], states, drive, 1, vec![0.0, 1.0 / 3.0, 2.0]).unwrap()
    }

    #[test]
    fn trajectory_round_trip_is_exact() {
        for relaxed in [false, true] {
            let t = sample(relaxed);
            let mut buf = Vec::new();
            write_trajectory(&t, &mut buf).unwrap();
            let text = String::from_utf8(buf.clone()).unwrap();
            let want = if relaxed { "t,x1,x2,u1,u2,y1" } else { "t,x1,x2,mode,y1" };
            assert_eq!(text.lines().next().unwrap(), want);
            assert_eq!(read_trajectory(&buf[..]).unwrap(), t);
        }
    }

    #[test]
    fn signal_round_trip() {
        let s = SwitchingSignal::new(vec![0.0, 0.7, 1.9], vec![ModeIndex::of(2), ModeIndex::of(1), ModeIndex::of(3)], 4.0)
            .unwrap();
        let dir = tempfile::tempdir().unwrap();
        let side = SignalSidecar { start: 0.0, end: 4.0, n_modes: 3, seed: Some(5), constraint: serde_json::json!({}) };
        write_signal_bundle(dir.path(), "sig", &s, &side).unwrap();
        let (back, side_back) = read_signal_bundle(dir.path(), "sig").unwrap();
        assert_eq!(back, s);
        assert_eq!(side_back, side);
    }

    #[test]
    fn bad_headers_are_rejected() {
        assert!(read_trajectory("a,b\n1,2\n".as_bytes()).is_err());
        assert!(read_trajectory("t,x1,mode\n0,1,0\n".as_bytes()).is_err());
        assert!(read_signal("t_break,mode\n0,0\n".as_bytes(), 1.0).is_err());
    }
}
