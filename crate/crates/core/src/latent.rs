//! Latent-circuit analysis of rank-one networks.
//!
//! With `W = m n^T` the projection `kappa = n . x` obeys the closed scalar flow
//!
//! ```text
//! tau dkappa/dt = -kappa + n . tanh(m kappa + b) = f(kappa)
//! ```
//!
//! exactly. This module samples `f` on a grid, brackets and bisects its roots,
//! finds ghosts (near-zero local minima of `|f|` without a root) and tracks
//! changes of the fixed-point count across training.

use std::fmt::Write as _;
use std::io::{BufRead, Write};

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rnn::{forward, RnnParams, TaskSpec};

pub const DEFAULT_HALF_WIDTH: f64 = 15.0;
pub const DEFAULT_GRID_NODES: usize = 3001;
pub const DEFAULT_ROOT_TOL: f64 = 1e-10;
pub const DEFAULT_EPS_GHOST: f64 = 0.05;
/// Slopes smaller than this in magnitude are reported as marginal.
pub const MARGINAL_SLOPE: f64 = 1e-8;

/// A scalar vector field `f(kappa)`.
pub trait ScalarFlow {
    fn eval(&self, kappa: f64) -> f64;
}

/// Wraps any closure as a [`ScalarFlow`], e.g. the toy flow `k^2 + r`.
#[derive(Debug, Clone, Copy)]
pub struct FnFlow<F>(pub F);

impl<F: Fn(f64) -> f64> ScalarFlow for FnFlow<F> {
    fn eval(&self, kappa: f64) -> f64 {
        (self.0)(kappa)
    }
}

/// The latent circuit `f(kappa) = -kappa + n . tanh(m kappa + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct RankOneCircuit {
    pub m: DVector<f64>,
    pub n: DVector<f64>,
    pub b: DVector<f64>,
    pub tau: f64,
}

impl RankOneCircuit {
    pub fn new(m: DVector<f64>, n: DVector<f64>, b: DVector<f64>, tau: f64) -> Result<Self> {
        if m.len() != n.len() || b.len() != n.len() {
            return Err(Error::ShapeMismatch {
                block: "latent circuit",
                expected: (n.len(), 1),
                found: (m.len(), b.len()),
            });
        }
        Ok(Self { m, n, b, tau })
    }

    pub fn from_params(params: &RnnParams) -> Result<Self> {
        if params.rank() != 1 {
            return Err(Error::RankPrecondition(params.rank()));
        }
        Self::new(
            params.m.column(0).into_owned(),
            params.latent_projection(),
            params.b.clone(),
            params.tau,
        )
    }

    /// `sum |n_i|`, the bound on `f(kappa) + kappa`.
    pub fn saturation_bound(&self) -> f64 {
        self.n.iter().map(|v| v.abs()).sum()
    }

    /// Half-width of a scan range guaranteed to bracket every fixed point.
    pub fn scan_half_width(&self) -> f64 {
        DEFAULT_HALF_WIDTH.max(self.saturation_bound() + 1.0)
    }

    /// `n . tanh(m kappa + b)`.
    pub fn recurrent_drive(&self, kappa: f64) -> f64 {
        self.m
            .iter()
            .zip(self.b.iter())
            .zip(self.n.iter())
            .map(|((m, b), n)| n * (m * kappa + b).tanh())
            .sum()
    }
}

impl ScalarFlow for RankOneCircuit {
    fn eval(&self, kappa: f64) -> f64 {
        -kappa + self.recurrent_drive(kappa)
    }
}

/// Uniform sampling grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    pub min: f64,
    pub max: f64,
    pub nodes: usize,
}

impl Default for Grid {
    fn default() -> Self {
        Self::symmetric(DEFAULT_HALF_WIDTH, DEFAULT_GRID_NODES)
    }
}

impl Grid {
    pub fn symmetric(half_width: f64, nodes: usize) -> Self {
        Self {
            min: -half_width,
            max: half_width,
            nodes,
        }
    }

    /// Default range, widened to `sum |n_i| + 1` when needed at the default spacing.
    pub fn auto(circuit: &RankOneCircuit) -> Self {
        let half = circuit.scan_half_width();
        let spacing = 2.0 * DEFAULT_HALF_WIDTH / (DEFAULT_GRID_NODES - 1) as f64;
        let nodes = (2.0 * half / spacing).ceil() as usize + 1;
        Self::symmetric(half, nodes.max(DEFAULT_GRID_NODES))
    }

    pub fn points(&self) -> Vec<f64> {
        let step = (self.max - self.min) / (self.nodes - 1) as f64;
        (0..self.nodes)
            .map(|i| {
                if i + 1 == self.nodes {
                    self.max
                } else {
                    self.min + step * i as f64
                }
            })
            .collect()
    }
}

/// `f` sampled on a strictly increasing grid.
#[derive(Debug, Clone)]
pub struct LatentFlow<F> {
    pub source: F,
    pub grid: Vec<f64>,
    pub values: Vec<f64>,
}

impl<F: ScalarFlow> LatentFlow<F> {
    pub fn sample(source: F, grid: Vec<f64>) -> Result<Self> {
        if grid.len() < 3 {
            return Err(Error::InvalidConfig("flow grid needs at least 3 nodes".into()));
        }
        if grid.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::InvalidConfig("flow grid must be strictly increasing".into()));
        }
        let values: Vec<f64> = grid.iter().map(|&k| source.eval(k)).collect();
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::InvalidConfig("flow is not finite on the grid".into()));
        }
        Ok(Self {
            source,
            grid,
            values,
        })
    }

    pub fn eval(&self, kappa: f64) -> f64 {
        self.source.eval(kappa)
    }

    pub fn range(&self) -> (f64, f64) {
        (self.grid[0], *self.grid.last().unwrap())
    }
}

/// Sample the latent flow of a rank-one circuit.
pub fn latent_flow(circuit: RankOneCircuit, grid: &Grid) -> Result<LatentFlow<RankOneCircuit>> {
    LatentFlow::sample(circuit, grid.points())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stability {
    Stable,
    Unstable,
    Marginal,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FixedPoint {
    pub kappa: f64,
    pub stability: Stability,
    pub residual: f64,
    pub slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FixedPointSet {
    pub points: Vec<FixedPoint>,
    pub range: (f64, f64),
    pub nodes: usize,
    pub tol: f64,
}

impl FixedPointSet {
    pub fn count(&self) -> usize {
        self.points.len()
    }
}

fn slope_at<F: ScalarFlow>(flow: &F, kappa: f64) -> f64 {
    let h = 1e-6 * kappa.abs().max(1.0);
    (flow.eval(kappa + h) - flow.eval(kappa - h)) / (2.0 * h)
}

fn classify(slope: f64) -> Stability {
    if slope.abs() < MARGINAL_SLOPE {
        Stability::Marginal
    } else if slope < 0.0 {
        Stability::Stable
    } else {
        Stability::Unstable
    }
}

/// Bisect a sign-changing bracket until `|f| < tol` or the bracket cannot
/// shrink further in floating point.
fn bisect<F: ScalarFlow>(flow: &F, mut lo: f64, mut hi: f64, mut f_lo: f64, tol: f64) -> (f64, f64) {
    let mut best = if f_lo.abs() <= flow.eval(hi).abs() {
        (lo, f_lo)
    } else {
        (hi, flow.eval(hi))
    };
    for _ in 0..2000 {
        let mid = 0.5 * (lo + hi);
        if mid <= lo || mid >= hi {
            break;
        }
        let f_mid = flow.eval(mid);
        if f_mid.abs() < best.1.abs() {
            best = (mid, f_mid);
        }
        if f_mid == 0.0 || f_mid.abs() < tol {
            return (mid, f_mid);
        }
        if (f_mid > 0.0) == (f_lo > 0.0) {
            lo = mid;
            f_lo = f_mid;
        } else {
            hi = mid;
        }
    }
    best
}

/// Every sign change between adjacent grid nodes, refined by bisection.
pub fn find_fixed_points<F: ScalarFlow>(flow: &LatentFlow<F>, tol: f64) -> FixedPointSet {
    let mut points = Vec::new();
    let (grid, values) = (&flow.grid, &flow.values);
    let mut push = |kappa: f64, value: f64| {
        let slope = slope_at(&flow.source, kappa);
        points.push(FixedPoint {
            kappa,
            stability: classify(slope),
            residual: value.abs(),
            slope,
        });
    };
    for i in 0..grid.len() {
        if values[i] == 0.0 {
            push(grid[i], 0.0);
            continue;
        }
        if i + 1 < grid.len() && values[i + 1] != 0.0 && (values[i] > 0.0) != (values[i + 1] > 0.0) {
            let (kappa, value) = bisect(&flow.source, grid[i], grid[i + 1], values[i], tol);
            push(kappa, value);
        }
    }
    FixedPointSet {
        points,
        range: flow.range(),
        nodes: grid.len(),
        tol,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ghost {
    pub kappa: f64,
    pub abs_flow: f64,
    pub curvature: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GhostSet {
    pub ghosts: Vec<Ghost>,
    pub eps_ghost: f64,
}

impl GhostSet {
    pub fn is_empty(&self) -> bool {
        self.ghosts.is_empty()
    }

    /// Ghost with the smallest `|f|`.
    pub fn slowest(&self) -> Option<&Ghost> {
        self.ghosts
            .iter()
            .min_by(|a, b| a.abs_flow.total_cmp(&b.abs_flow))
    }

    /// Ghost closest to `kappa`.
    pub fn nearest(&self, kappa: f64) -> Option<&Ghost> {
        self.ghosts
            .iter()
            .min_by(|a, b| (a.kappa - kappa).abs().total_cmp(&(b.kappa - kappa).abs()))
    }
}

/// Vertex of the parabola through three points.
fn parabola_vertex(x: [f64; 3], y: [f64; 3]) -> Option<f64> {
    let d01 = (y[1] - y[0]) / (x[1] - x[0]);
    let d12 = (y[2] - y[1]) / (x[2] - x[1]);
    let a = (d12 - d01) / (x[2] - x[0]);
    if !(a.abs() > 0.0) {
        return None;
    }
    // y' = d01 + a (2x - x0 - x1) = 0
    Some(0.5 * (x[0] + x[1] - d01 / a))
}

/// Strict local minima of `|f|` below `eps_ghost` whose neighbouring cells
/// contain no sign change.
pub fn find_ghosts<F: ScalarFlow>(flow: &LatentFlow<F>, eps_ghost: f64) -> GhostSet {
    let (grid, values) = (&flow.grid, &flow.values);
    let mut ghosts = Vec::new();
    for i in 1..grid.len() - 1 {
        let (l, c, r) = (values[i - 1], values[i], values[i + 1]);
        let same_sign = (l > 0.0 && c > 0.0 && r > 0.0) || (l < 0.0 && c < 0.0 && r < 0.0);
        if !same_sign || !(c.abs() < l.abs() && c.abs() < r.abs()) || !(c.abs() < eps_ghost) {
            continue;
        }
        let xs = [grid[i - 1], grid[i], grid[i + 1]];
        let mut kappa = grid[i];
        let mut value = c;
        if let Some(v) = parabola_vertex(xs, [l, c, r]) {
            if v > xs[0] && v < xs[2] {
                let fv = flow.eval(v);
                if (fv > 0.0) == (c > 0.0) && fv != 0.0 && fv.abs() < c.abs() {
                    kappa = v;
                    value = fv;
                }
            }
        }
        let h = 0.5 * (xs[2] - xs[0]);
        let curvature = (flow.eval(kappa + h) - 2.0 * flow.eval(kappa) + flow.eval(kappa - h)) / (h * h);
        ghosts.push(Ghost {
            kappa,
            abs_flow: value.abs(),
            curvature,
        });
    }
    GhostSet { ghosts, eps_ghost }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BifurcationKind {
    CountIncrease,
    CountDecrease,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct BifurcationEvent {
    /// Epoch of the first snapshot with the new count.
    pub epoch: usize,
    pub count_before: usize,
    pub count_after: usize,
    pub kind: BifurcationKind,
}

/// One event per consecutive pair of snapshots whose fixed-point counts differ.
pub fn track_bifurcations<'a, I>(history: I) -> Vec<BifurcationEvent>
where
    I: IntoIterator<Item = (usize, &'a FixedPointSet)>,
{
    let mut events = Vec::new();
    let mut prev: Option<usize> = None;
    for (epoch, set) in history {
        let count = set.count();
        if let Some(before) = prev {
            if before != count {
                events.push(BifurcationEvent {
                    epoch,
                    count_before: before,
                    count_after: count,
                    kind: if count > before {
                        BifurcationKind::CountIncrease
                    } else {
                        BifurcationKind::CountDecrease
                    },
                });
            }
        }
        prev = Some(count);
    }
    events
}

/// Largest gap between `n . x[k]` from the full simulation and the scalar
/// recursion `kappa <- (1 - d) kappa + d n . tanh(m kappa + b)`.
pub fn latent_step_consistency(params: &RnnParams, task: &TaskSpec) -> Result<f64> {
    let circuit = RankOneCircuit::from_params(params)?;
    task.validate()?;
    let full = forward(params, task);
    let kappa_full = full.latent.expect("rank-one trajectories carry the latent");
    let delta = task.dt / params.tau;
    let mut kappa = circuit.n.sum() * task.x0;
    let mut worst: f64 = 0.0;
    for &k_full in &kappa_full {
        worst = worst.max((k_full - kappa).abs());
        kappa = (1.0 - delta) * kappa + delta * circuit.recurrent_drive(kappa);
    }
    Ok(worst)
}

/// Fixed points and ghosts of one flow, as written to the JSON sidecar.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FlowAnalysis {
    pub epoch: Option<usize>,
    pub fixed_points: FixedPointSet,
    pub ghosts: GhostSet,
}

impl FlowAnalysis {
    pub fn of<F: ScalarFlow>(flow: &LatentFlow<F>, epoch: Option<usize>, tol: f64, eps_ghost: f64) -> Self {
        Self {
            epoch,
            fixed_points: find_fixed_points(flow, tol),
            ghosts: find_ghosts(flow, eps_ghost),
        }
    }
}

/// Two-column text (`kappa f`), one node per line, shortest round-trip decimals.
pub fn write_flow_text<F, W: Write>(flow: &LatentFlow<F>, out: W) -> std::io::Result<()> {
    write_flow_columns(&flow.grid, &flow.values, out)
}

/// [`write_flow_text`] over bare columns of equal length.
pub fn write_flow_columns<W: Write>(grid: &[f64], values: &[f64], mut out: W) -> std::io::Result<()> {
    let mut buf = String::with_capacity(grid.len() * 40);
    buf.push_str("# kappa f\n");
    for (k, v) in grid.iter().zip(values) {
        let _ = writeln!(buf, "{k:?} {v:?}");
    }
    out.write_all(buf.as_bytes())
}

/// Parse the output of [`write_flow_text`] into `(grid, values)`.
pub fn read_flow_text<R: BufRead>(input: R) -> Result<(Vec<f64>, Vec<f64>)> {
    let mut grid = Vec::new();
    let mut values = Vec::new();
    for (no, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<flow text>", e))?;
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let mut cols = line.split_whitespace();
        let mut next = || -> Result<f64> {
            cols.next()
                .and_then(|c| c.parse().ok())
                .ok_or_else(|| Error::InvalidConfig(format!("flow text line {}: expected two numbers", no + 1)))
        };
        grid.push(next()?);
        values.push(next()?);
    }
    Ok((grid, values))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::rnn::{init_params, ReadoutKind};
    use proptest::prelude::*;

    fn circuit(m: &[f64], n: &[f64], b: &[f64]) -> RankOneCircuit {
        RankOneCircuit::new(
            DVector::from_column_slice(m),
            DVector::from_column_slice(n),
            DVector::from_column_slice(b),
            10.0,
        )
        .unwrap()
    }

    /// Brute-force count of sign changes on a refined grid.
    fn dense_sign_changes<F: ScalarFlow>(f: &F, min: f64, max: f64, nodes: usize) -> usize {
        let pts = Grid { min, max, nodes }.points();
        let vals: Vec<f64> = pts.iter().map(|&k| f.eval(k)).collect();
        vals.windows(2).filter(|w| (w[0] > 0.0) != (w[1] > 0.0)).count()
    }

    #[test]
    fn zero_bias_flow_vanishes_at_origin() {
        let c = circuit(&[0.3, -0.2], &[0.5, 0.1], &[0.0, 0.0]);
        assert_eq!(c.eval(0.0), 0.0);
    }

    #[test]
    fn flow_saturates_to_linear_decay() {
        let c = circuit(&[1.0, -2.0, 0.5], &[0.7, -0.4, 1.1], &[0.1, 0.2, -0.3]);
        let bound = c.saturation_bound();
        for k in [-1e6, -300.0, -20.0, 20.0, 300.0, 1e6] {
            let resid = c.eval(k) + k;
            assert!(resid.abs() <= bound, "{k}: {resid}");
        }
    }

    #[test]
    fn zero_gain_flow_is_linear_decay_to_constant() {
        let c = circuit(&[0.0, 0.0], &[0.5, -0.25], &[0.3, -1.0]);
        let offset = 0.5 * 0.3f64.tanh() - 0.25 * (-1.0f64).tanh();
        for k in [-3.0, 0.0, 2.5] {
            assert!((c.eval(k) - (-k + offset)).abs() < 1e-15);
        }
    }

    #[test]
    fn decay_flow_has_single_stable_root() {
        let flow = latent_flow(circuit(&[0.0], &[0.0], &[0.0]), &Grid::default()).unwrap();
        let fps = find_fixed_points(&flow, DEFAULT_ROOT_TOL);
        assert_eq!(fps.count(), 1);
        assert!(fps.points[0].kappa.abs() < 1e-10);
        assert_eq!(fps.points[0].stability, Stability::Stable);
    }

    #[test]
    fn bistable_flow_has_three_roots() {
        // n . tanh(m k) with gain n.m = 3 > 1 gives an S-shaped drive
        let c = circuit(&[1.0], &[3.0], &[0.1]);
        let flow = latent_flow(c.clone(), &Grid::default()).unwrap();
        let fps = find_fixed_points(&flow, DEFAULT_ROOT_TOL);
        let kinds: Vec<_> = fps.points.iter().map(|p| p.stability).collect();
        assert_eq!(kinds, vec![Stability::Stable, Stability::Unstable, Stability::Stable]);
        assert_eq!(fps.count(), dense_sign_changes(&c, -15.0, 15.0, 30001));
        for p in &fps.points {
            assert!(p.residual < DEFAULT_ROOT_TOL);
        }
        assert!(fps.points.windows(2).all(|w| w[0].kappa < w[1].kappa));
    }

    #[test]
    fn toy_flow_has_one_ghost_at_origin() {
        let r = 1e-3;
        let flow = LatentFlow::sample(FnFlow(|k: f64| k * k + r), Grid::symmetric(1.0, 2001).points()).unwrap();
        let ghosts = find_ghosts(&flow, DEFAULT_EPS_GHOST);
        assert_eq!(ghosts.ghosts.len(), 1);
        let g = ghosts.ghosts[0];
        assert!(g.kappa.abs() < 1e-12);
        assert!((g.abs_flow - r).abs() < 1e-12);
        assert!((g.curvature - 2.0).abs() < 1e-6);
        assert!(find_fixed_points(&flow, DEFAULT_ROOT_TOL).points.is_empty());
    }

    #[test]
    fn ghost_refinement_off_grid() {
        let r = 2e-3;
        let flow = LatentFlow::sample(FnFlow(|k: f64| (k - 0.1234) * (k - 0.1234) + r), Grid::default().points()).unwrap();
        let g = find_ghosts(&flow, DEFAULT_EPS_GHOST).ghosts;
        assert_eq!(g.len(), 1);
        assert!((g[0].kappa - 0.1234).abs() < 1e-9);
        assert!(g[0].abs_flow >= r && g[0].abs_flow < r + 1e-12);
    }

    #[test]
    fn zero_weight_net_has_no_ghost() {
        let flow = latent_flow(circuit(&[0.0; 4], &[0.0; 4], &[0.0; 4]), &Grid::default()).unwrap();
        assert!(find_ghosts(&flow, DEFAULT_EPS_GHOST).is_empty());
    }

    #[test]
    fn wide_scan_always_brackets_a_root() {
        for seed in 0..30 {
            let p = init_params(seed, 20, 1, ReadoutKind::LatentThreshold, 10.0).unwrap();
            let mut c = RankOneCircuit::from_params(&p).unwrap();
            c.n *= 1.0 + seed as f64;
            c.m *= 3.0;
            let grid = Grid::auto(&c);
            let flow = latent_flow(c, &grid).unwrap();
            assert!(flow.values[0] > 0.0 && *flow.values.last().unwrap() < 0.0);
            let fps = find_fixed_points(&flow, DEFAULT_ROOT_TOL);
            assert!(fps.count() % 2 == 1, "seed {seed}: {}", fps.count());
        }
    }

    #[test]
    fn bifurcation_tracking() {
        let set = |n: usize| FixedPointSet {
            points: vec![
                FixedPoint {
                    kappa: 0.0,
                    stability: Stability::Stable,
                    residual: 0.0,
                    slope: -1.0
                };
                n
            ],
            range: (-15.0, 15.0),
            nodes: 3001,
            tol: 1e-10,
        };
        let constant = [set(1), set(1), set(1)];
        assert!(track_bifurcations(constant.iter().enumerate()).is_empty());
        let hist = [set(1), set(1), set(3), set(3)];
        let events = track_bifurcations(hist.iter().enumerate().map(|(i, s)| (10 * i, s)));
        assert_eq!(
            events,
            vec![BifurcationEvent {
                epoch: 20,
                count_before: 1,
                count_after: 3,
                kind: BifurcationKind::CountIncrease
            }]
        );
    }

    #[test]
    fn consistency_rejects_higher_rank() {
        let p = init_params(0, 6, 2, ReadoutKind::LatentThreshold, 10.0).unwrap();
        assert!(matches!(
            latent_step_consistency(&p, &TaskSpec::default()),
            Err(Error::RankPrecondition(2))
        ));
    }

    #[test]
    fn flow_text_round_trip() {
        let p = init_params(4, 30, 1, ReadoutKind::LatentThreshold, 10.0).unwrap();
        let flow = latent_flow(RankOneCircuit::from_params(&p).unwrap(), &Grid::default()).unwrap();
        let mut buf = Vec::new();
        write_flow_text(&flow, &mut buf).unwrap();
        let (grid, values) = read_flow_text(buf.as_slice()).unwrap();
        assert_eq!(grid, flow.grid);
        assert_eq!(values, flow.values);
    }

    proptest! {
        #[test]
        fn roots_agree_with_dense_oracle(
            m in prop::collection::vec(-3.0f64..3.0, 3),
            n in prop::collection::vec(-3.0f64..3.0, 3),
            b in prop::collection::vec(-1.0f64..1.0, 3),
        ) {
            let c = circuit(&m, &n, &b);
            let flow = latent_flow(c.clone(), &Grid::default()).unwrap();
            let fps = find_fixed_points(&flow, DEFAULT_ROOT_TOL);
            for p in &fps.points {
                prop_assert!(p.residual < DEFAULT_ROOT_TOL);
                let expected = classify(slope_at(&c, p.kappa));
                prop_assert_eq!(p.stability, expected);
            }
            // the dense grid may resolve extra tangential pairs but never fewer roots
            prop_assert!(dense_sign_changes(&c, -15.0, 15.0, 30001) >= fps.count());
            let ghosts = find_ghosts(&flow, 0.5);
            for g in &ghosts.ghosts {
                prop_assert!(g.abs_flow > 0.0 && g.abs_flow < 0.5);
                let i = flow.grid.partition_point(|&k| k < g.kappa);
                let lo = i.saturating_sub(2);
                let hi = (i + 2).min(flow.grid.len() - 1);
                let cell = &flow.values[lo..=hi];
                prop_assert!(cell.iter().all(|v| (*v > 0.0) == (cell[0] > 0.0)));
            }
        }
    }
}
