//! Alignment of the asynchronous pose and F/T streams onto a 60 Hz grid.

use alloc::vec::Vec;

use super::DataError;
use crate::demo::EpisodeRecord;
use crate::rotation::{slerp, Quat};

pub const ALIGNED_RATE_HZ: f64 = 60.0;

/// Both streams on one uniform timebase (ms).
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedTrajectory {
    pub t: Vec<f64>,
    pub poses: Vec<[f64; 7]>,
    pub wrenches: Vec<[f64; 6]>,
}

impl AlignedTrajectory {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }
}

/// Index `i` with `ts[i] <= t <= ts[i + 1]`, searching forward from `hint`.
fn bracket(ts: &[f64], t: f64, hint: &mut usize) -> (usize, f64) {
    while *hint + 2 < ts.len() && ts[*hint + 1] < t {
        *hint += 1;
    }
    let i = *hint;
    let span = ts[i + 1] - ts[i];
    let a = if span > 0.0 { ((t - ts[i]) / span).clamp(0.0, 1.0) } else { 0.0 };
    (i, a)
}

/// Grid points `k / rate` (in ms) that fall inside `[start, end]`.
pub fn grid(start: f64, end: f64, rate_hz: f64) -> Vec<f64> {
    let period = 1000.0 / rate_hz;
    let first = libm::ceil(start / period - 1e-9) as i64;
    let last = libm::floor(end / period + 1e-9) as i64;
    (first..=last).map(|k| k as f64 * 1000.0 / rate_hz).filter(|t| *t >= start && *t <= end).collect()
}

/// Linear interpolation for positions and wrenches, slerp for rotations,
/// over the intersection of the two streams' time supports.
pub fn resample_60hz(ep: &EpisodeRecord) -> Result<AlignedTrajectory, DataError> {
    let (ps, ws) = (&ep.pose_stream, &ep.wrench_stream);
    if ps.len() < 2 || ws.len() < 2 {
        return Err(DataError::TooShort { len: ps.len().min(ws.len()), need: 2 });
    }
    let start = ps[0].t.max(ws[0].t);
    let end = ps[ps.len() - 1].t.min(ws[ws.len() - 1].t);
    if !(end > start) {
        return Err(DataError::NoOverlap);
    }
    let t = grid(start, end, ALIGNED_RATE_HZ);
    let pt: Vec<f64> = ps.iter().map(|p| p.t).collect();
    let wt: Vec<f64> = ws.iter().map(|w| w.t).collect();
    let (mut hp, mut hw) = (0, 0);
    let mut poses = Vec::with_capacity(t.len());
    let mut wrenches = Vec::with_capacity(t.len());
    for &tk in &t {
        let (i, a) = bracket(&pt, tk, &mut hp);
        let (p0, p1) = (&ps[i].v, &ps[i + 1].v);
        let q = slerp(Quat::new(p0[3], p0[4], p0[5], p0[6]), Quat::new(p1[3], p1[4], p1[5], p1[6]), a);
        poses.push([
            p0[0] + a * (p1[0] - p0[0]),
            p0[1] + a * (p1[1] - p0[1]),
            p0[2] + a * (p1[2] - p0[2]),
            q.w,
            q.x,
            q.y,
            q.z,
        ]);
        let (j, b) = bracket(&wt, tk, &mut hw);
        let (w0, w1) = (&ws[j].v, &ws[j + 1].v);
        let mut w = [0.0; 6];
        for d in 0..6 {
            w[d] = w0[d] + b * (w1[d] - w0[d]);
        }
        wrenches.push(w);
    }
    Ok(AlignedTrajectory { t, poses, wrenches })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::demo::{DemoType, EpisodeMeta, PoseRecord, WrenchRecord};

    fn episode(pose_t: &[f64], wrench_t: &[f64]) -> EpisodeRecord {
        EpisodeRecord {
            meta: EpisodeMeta {
                episode_id: "x".into(),
                demo_type: DemoType::Nominal,
                mortise_offset: 0.0,
                seed: 0,
                units: Default::default(),
                retries: 0,
            },
            pose_stream: pose_t
                .iter()
                .map(|&t| {
                    let q = Quat::about_y(t * 1e-3);
                    PoseRecord { t, v: [2.0 * t, 0.0, -t, q.w, q.x, q.y, q.z] }
                })
                .collect(),
            wrench_stream: wrench_t.iter().map(|&t| WrenchRecord { t, v: [2.0 * t, 0.0, 1.0, 0.0, 0.0, 0.0] }).collect(),
        }
    }

    #[test]
    fn affine_streams_are_reproduced_exactly() {
        let pt: Vec<f64> = (0..100).map(|i| i as f64 * 12.0).collect();
        let wt: Vec<f64> = (0..80).map(|i| i as f64 * 15.625).collect();
        let a = resample_60hz(&episode(&pt, &wt)).unwrap();
        let k = a.t.iter().position(|t| *t == 100.0).unwrap();
        assert_eq!(a.wrenches[k][0], 200.0);
        assert_eq!(a.poses[k][0], 200.0);
        for (t, p) in a.t.iter().zip(&a.poses) {
            assert!((p[0] - 2.0 * t).abs() < 1e-9);
            let q = Quat::new(p[3], p[4], p[5], p[6]);
            assert!((q.y_angle() - t * 1e-3).abs() < 1e-9);
        }
    }

    #[test]
    fn six_seconds_gives_360_steps() {
        let pt: Vec<f64> = (0..=500).map(|i| i as f64 * 12.0).collect();
        let wt: Vec<f64> = (0..=384).map(|i| i as f64 * 15.625).collect();
        let a = resample_60hz(&episode(&pt, &wt)).unwrap();
        assert!((a.len() as i64 - 360).abs() <= 1, "{}", a.len());
        for w in a.t.windows(2) {
            assert!((w[1] - w[0] - 1000.0 / 60.0).abs() < 1e-9);
        }
    }

    #[test]
    fn slerp_midpoint_of_quarter_turn() {
        let q = slerp(Quat::IDENTITY, Quat::about_y(core::f64::consts::FRAC_PI_2), 0.5);
        let e = Quat::about_y(core::f64::consts::FRAC_PI_4);
        assert!((q.w - e.w).abs() < 1e-9 && (q.y - e.y).abs() < 1e-9);
    }

    #[test]
    fn disjoint_streams_are_rejected() {
        let err = resample_60hz(&episode(&[0.0, 12.0], &[100.0, 115.625])).unwrap_err();
        assert_eq!(err, DataError::NoOverlap);
    }
}
