//! Episode files: NDJSON with the metadata object on the first line and one
//! stream sample per following line.

use std::fs;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};

use joinery_core::demo::{EpisodeMeta, EpisodeRecord, PoseRecord, WrenchRecord};
use serde::{Deserialize, Serialize};

use crate::Error;

/// One sample line: `k` is `"p"` (pose) or `"w"` (wrench).
#[derive(Debug, Serialize, Deserialize)]
struct Line {
    k: String,
    t: f64,
    v: Vec<f64>,
}

pub fn write_episode<W: Write>(ep: &EpisodeRecord, w: W) -> Result<(), Error> {
    let mut w = BufWriter::new(w);
    serde_json::to_writer(&mut w, &ep.meta)?;
    w.write_all(b"\n")?;
    // merge the two streams by time so the file reads as a log
    let (mut i, mut j) = (0, 0);
    let (ps, ws) = (&ep.pose_stream, &ep.wrench_stream);
    while i < ps.len() || j < ws.len() {
        let pose_next = j >= ws.len() || (i < ps.len() && ps[i].t <= ws[j].t);
        let line = if pose_next {
            i += 1;
            Line { k: "p".into(), t: ps[i - 1].t, v: ps[i - 1].v.to_vec() }
        } else {
            j += 1;
            Line { k: "w".into(), t: ws[j - 1].t, v: ws[j - 1].v.to_vec() }
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_episode<R: Read>(r: R) -> Result<EpisodeRecord, Error> {
    let mut lines = BufReader::new(r).lines();
    let first = lines.next().ok_or_else(|| Error::Format("empty episode file".into()))??;
    let meta: EpisodeMeta = serde_json::from_str(&first)?;
    let mut ep = EpisodeRecord { meta, pose_stream: Vec::new(), wrench_stream: Vec::new() };
    for (n, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let l: Line = serde_json::from_str(&line)?;
        let bad = |what: &str| Error::Format(format!("line {}: {what}", n + 2));
        match l.k.as_str() {
            "p" => ep.pose_stream.push(PoseRecord { t: l.t, v: l.v.try_into().map_err(|_| bad("pose needs 7 values"))? }),
            "w" => ep.wrench_stream.push(WrenchRecord { t: l.t, v: l.v.try_into().map_err(|_| bad("wrench needs 6 values"))? }),
            other => return Err(bad(&format!("unknown stream {other:?}"))),
        }
    }
    Ok(ep)
}

pub fn save_episode(ep: &EpisodeRecord, path: &Path) -> Result<(), Error> {
    write_episode(ep, fs::File::create(path)?)
}

pub fn load_episode(path: &Path) -> Result<EpisodeRecord, Error> {
    read_episode(fs::File::open(path)?).map_err(|e| e.context(path))
}

/// File name used for an episode inside a directory.
pub fn episode_file_name(ep: &EpisodeRecord) -> String {
    format!("{}.ndjson", ep.meta.episode_id)
}

/// Writes every episode into `dir`; returns the paths in order.
pub fn save_episodes(eps: &[EpisodeRecord], dir: &Path) -> Result<Vec<PathBuf>, Error> {
    fs::create_dir_all(dir)?;
    eps.iter()
        .map(|ep| {
            let p = dir.join(episode_file_name(ep));
            save_episode(ep, &p)?;
            Ok(p)
        })
        .collect()
}

/// Episode files of a directory, sorted by name.
pub fn list_episodes(dir: &Path) -> Result<Vec<PathBuf>, Error> {
    let mut out: Vec<PathBuf> = fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|x| x == "ndjson"))
        .collect();
    out.sort();
    Ok(out)
}
