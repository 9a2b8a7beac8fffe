//! Winding numbers, rectangle degrees and a subdivision zero finder for
//! planar fields `F(t, s)`.
//!
//! The parameter plane carries `t` on the horizontal axis and `s` on the
//! vertical one, and rectangle boundaries are walked counterclockwise in that
//! picture. A nonzero boundary degree certifies a zero of `F` inside.

use std::collections::HashMap;
use std::f64::consts::PI;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Points closer than this to the origin make the winding number undefined.
pub const ORIGIN_EPS: f64 = 1e-9;

/// An ordered list of planar samples.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlanarPath {
    pub points: Vec<[f64; 2]>,
    pub closed: bool,
}

impl PlanarPath {
    pub fn closed(points: Vec<[f64; 2]>) -> Self {
        Self { points, closed: true }
    }

    /// The same loop traversed backwards.
    pub fn reversed(&self) -> Self {
        let mut points = self.points.clone();
        points.reverse();
        Self { points, closed: self.closed }
    }

    /// `n` points on the circle of the given radius, counterclockwise from `(r, 0)`.
    pub fn circle(n: usize, radius: f64) -> Self {
        Self::closed(
            (0..n)
                .map(|k| {
                    let th = 2.0 * PI * k as f64 / n as f64;
                    [radius * th.cos(), radius * th.sin()]
                })
                .collect(),
        )
    }

    /// Smallest distance of any sample to the origin.
    pub fn min_norm(&self) -> f64 {
        self.points.iter().map(|p| p[0].hypot(p[1])).fold(f64::INFINITY, f64::min)
    }

    /// Signed angle increments between consecutive samples, each in `(−π, π]`.
    fn increments(&self) -> Result<Vec<f64>> {
        let n = self.points.len();
        if n < 2 {
            return Err(Error::Winding(format!("path has {n} points")));
        }
        if let Some((k, p)) = self.points.iter().enumerate().find(|(_, p)| !(p[0].hypot(p[1]) > ORIGIN_EPS)) {
            return Err(Error::Winding(format!("sample {k} at ({:e}, {:e}) is within {ORIGIN_EPS:e} of the origin", p[0], p[1])));
        }
        let edges = if self.closed { n } else { n - 1 };
        let mut out = Vec::with_capacity(edges);
        for k in 0..edges {
            let (a, b) = (self.points[k], self.points[(k + 1) % n]);
            let cross = a[0] * b[1] - a[1] * b[0];
            let dot = a[0] * b[0] + a[1] * b[1];
            let d = cross.atan2(dot);
            if d.abs() >= PI {
                return Err(Error::Winding(format!("angular step {d:.3} between samples {k} and {} is not below π; refine the sampling", (k + 1) % n)));
            }
            out.push(d);
        }
        Ok(out)
    }

    /// Total signed angle swept, in radians.
    pub fn total_angle(&self) -> Result<f64> {
        Ok(self.increments()?.iter().sum())
    }
}

/// `(1/2π)` times the summed signed angle increments of a closed path.
pub fn winding_number(path: &PlanarPath) -> Result<i64> {
    if !path.closed {
        return Err(Error::Winding("path is not closed".into()));
    }
    let turns = path.total_angle()? / (2.0 * PI);
    let k = turns.round();
    if (turns - k).abs() > 1e-6 {
        return Err(Error::Winding(format!("closed path swept {turns} turns")));
    }
    Ok(k as i64)
}

/// A planar field evaluated column by column: one call fixes `s` and returns
/// `F(t, s)` for every requested `t`. This matches solvers that produce the
/// whole time history for one rotation angle in a single run.
pub trait HomotopyField: Sync {
    fn column(&self, s: f64, ts: &[f64]) -> Result<Vec<[f64; 2]>>;
}

impl<F> HomotopyField for F
where
    F: Fn(f64, f64) -> [f64; 2] + Sync,
{
    fn column(&self, s: f64, ts: &[f64]) -> Result<Vec<[f64; 2]>> {
        Ok(ts.iter().map(|&t| self(t, s)).collect())
    }
}

/// Closed-form test field `(g(t) cos s − κ, −g(t) sin s)` with `g(t) = t`.
/// Its only zero in `s ∈ (−π, π)` sits at `(t, s) = (κ, 0)`, where the
/// local degree is `−1`.
#[derive(Debug, Clone, Copy)]
pub struct SyntheticField {
    pub kappa: f64,
}

impl SyntheticField {
    pub fn eval(&self, t: f64, s: f64) -> [f64; 2] {
        [t * s.cos() - self.kappa, -t * s.sin()]
    }

    pub fn zero(&self) -> (f64, f64) {
        (self.kappa, 0.0)
    }
}

impl HomotopyField for SyntheticField {
    fn column(&self, s: f64, ts: &[f64]) -> Result<Vec<[f64; 2]>> {
        Ok(ts.iter().map(|&t| self.eval(t, s)).collect())
    }
}

/// Axis-aligned rectangle in the `(t, s)` plane with per-edge sample counts.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ParameterRectangle {
    pub t_lo: f64,
    pub t_hi: f64,
    pub s_lo: f64,
    pub s_hi: f64,
    pub n_t: usize,
    pub n_s: usize,
}

impl ParameterRectangle {
    pub fn new(t_lo: f64, t_hi: f64, s_lo: f64, s_hi: f64, n_t: usize, n_s: usize) -> Result<Self> {
        let r = Self { t_lo, t_hi, s_lo, s_hi, n_t, n_s };
        r.validate()?;
        Ok(r)
    }

    /// `t_lo < t_hi`, `s_lo ≤ s_hi` and at least 8 samples per edge. A
    /// rectangle of zero height is accepted as a degenerate case.
    pub fn validate(&self) -> Result<()> {
        let finite = [self.t_lo, self.t_hi, self.s_lo, self.s_hi].iter().all(|v| v.is_finite());
        if !finite || self.t_lo >= self.t_hi || self.s_lo > self.s_hi {
            return Err(invalid(format!(
                "rectangle [{}, {}]×[{}, {}] is not ordered",
                self.t_lo, self.t_hi, self.s_lo, self.s_hi
            )));
        }
        if self.n_t < 8 || self.n_s < 8 {
            return Err(invalid(format!("need at least 8 samples per edge, got n_t = {}, n_s = {}", self.n_t, self.n_s)));
        }
        Ok(())
    }

    pub fn center(&self) -> (f64, f64) {
        (0.5 * (self.t_lo + self.t_hi), 0.5 * (self.s_lo + self.s_hi))
    }

    pub fn diameter(&self) -> f64 {
        (self.t_hi - self.t_lo).hypot(self.s_hi - self.s_lo)
    }

    pub fn contains(&self, t: f64, s: f64) -> bool {
        (self.t_lo..=self.t_hi).contains(&t) && (self.s_lo..=self.s_hi).contains(&s)
    }

    /// Boundary samples, counterclockwise from `(t_lo, s_lo)`, without the
    /// closing repeat.
    pub fn boundary(&self) -> Vec<(f64, f64)> {
        let t = |i: usize| lerp(self.t_lo, self.t_hi, i, self.n_t - 1);
        let s = |j: usize| lerp(self.s_lo, self.s_hi, j, self.n_s - 1);
        let mut pts = Vec::with_capacity(2 * (self.n_t + self.n_s));
        pts.extend((0..self.n_t).map(|i| (t(i), self.s_lo)));
        pts.extend((1..self.n_s).map(|j| (self.t_hi, s(j))));
        pts.extend((0..self.n_t - 1).rev().map(|i| (t(i), self.s_hi)));
        pts.extend((1..self.n_s - 1).rev().map(|j| (self.t_lo, s(j))));
        pts
    }

    /// The four quadrants around the center, with the same sample counts.
    pub fn quadrants(&self) -> [Self; 4] {
        self.quadrants_at(0.5)
    }

    /// Quadrants around the point at fraction `f` of each side.
    pub fn quadrants_at(&self, f: f64) -> [Self; 4] {
        let tm = self.t_lo + f * (self.t_hi - self.t_lo);
        let sm = self.s_lo + f * (self.s_hi - self.s_lo);
        let q = |t_lo, t_hi, s_lo, s_hi| Self { t_lo, t_hi, s_lo, s_hi, ..*self };
        [
            q(self.t_lo, tm, self.s_lo, sm),
            q(tm, self.t_hi, self.s_lo, sm),
            q(tm, self.t_hi, sm, self.s_hi),
            q(self.t_lo, tm, sm, self.s_hi),
        ]
    }
}

fn lerp(a: f64, b: f64, i: usize, n: usize) -> f64 {
    if i == n {
        b
    } else {
        a + (b - a) * (i as f64 / n as f64)
    }
}

/// Evaluate `field` on `points`, one column call per distinct `s`, columns in
/// parallel.
fn evaluate(field: &impl HomotopyField, points: &[(f64, f64)]) -> Result<Vec<[f64; 2]>> {
    let mut columns: HashMap<u64, Vec<f64>> = HashMap::new();
    for &(t, s) in points {
        columns.entry(s.to_bits()).or_default().push(t);
    }
    let columns: Vec<(u64, Vec<f64>)> = columns.into_iter().collect();
    let values: Vec<Vec<[f64; 2]>> =
        columns.par_iter().map(|(s, ts)| field.column(f64::from_bits(*s), ts)).collect::<Result<_>>()?;
    let mut table: HashMap<(u64, u64), [f64; 2]> = HashMap::new();
    for ((s, ts), vs) in columns.iter().zip(values) {
        if vs.len() != ts.len() {
            return Err(invalid(format!("column returned {} values for {} times", vs.len(), ts.len())));
        }
        for (t, v) in ts.iter().zip(vs) {
            table.insert((t.to_bits(), *s), v);
        }
    }
    Ok(points.iter().map(|(t, s)| table[&(t.to_bits(), s.to_bits())]).collect())
}

/// Winding number of `F` along the counterclockwise boundary of `rect`.
pub fn boundary_degree(rect: &ParameterRectangle, field: &impl HomotopyField) -> Result<i64> {
    rect.validate()?;
    winding_number(&PlanarPath::closed(evaluate(field, &rect.boundary())?))
}

/// Settings of [`locate_zero`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocateOptions {
    /// Stop once `|F|` at the rectangle center is at most this.
    pub tol_f: f64,
    /// Stop once the rectangle diameter is at most this.
    pub tol_param: f64,
    /// How often the sample counts may be doubled when no quadrant carries
    /// degree.
    pub retries: usize,
    pub max_depth: usize,
}

impl Default for LocateOptions {
    fn default() -> Self {
        Self { tol_f: 1e-3, tol_param: 1e-6, retries: 2, max_depth: 60 }
    }
}

const OFF_CENTER: f64 = 0.381_966_011_250_105;

/// Outcome of [`locate_zero`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LocatedZero {
    pub s_star: f64,
    pub t_star: f64,
    pub f_norm: f64,
    /// Rectangle the search ended in.
    pub rect: ParameterRectangle,
    pub depth: usize,
    /// Degree of the starting rectangle.
    pub degree: i64,
}

/// Memoizing wrapper so points shared between nested rectangles are
/// evaluated once.
struct Cached<'a, F> {
    field: &'a F,
    table: HashMap<(u64, u64), [f64; 2]>,
}

impl<F: HomotopyField> Cached<'_, F> {
    fn get(&mut self, points: &[(f64, f64)]) -> Result<Vec<[f64; 2]>> {
        let missing: Vec<(f64, f64)> =
            points.iter().copied().filter(|(t, s)| !self.table.contains_key(&(t.to_bits(), s.to_bits()))).collect();
        if !missing.is_empty() {
            let vals = evaluate(self.field, &missing)?;
            for ((t, s), v) in missing.into_iter().zip(vals) {
                self.table.insert((t.to_bits(), s.to_bits()), v);
            }
        }
        Ok(points.iter().map(|(t, s)| self.table[&(t.to_bits(), s.to_bits())]).collect())
    }

    fn degree(&mut self, rect: &ParameterRectangle) -> Result<(i64, f64)> {
        let path = PlanarPath::closed(self.get(&rect.boundary())?);
        let min = path.min_norm();
        Ok((winding_number(&path)?, min))
    }
}

/// Nested quadrisection toward a zero of `F`.
///
/// Each round evaluates `F` at the center, stops if it is small enough, and
/// otherwise keeps the quadrant whose boundary degree is nonzero. When
/// several qualify the one with the smaller boundary minimum of `|F|` wins.
/// Quadrants whose boundary cannot carry a winding number are skipped; if no
/// quadrant qualifies the sample counts are doubled, up to `opts.retries`
/// times, and finally an off-center split is tried in case the zero sits on
/// a dividing line.
pub fn locate_zero(rect: &ParameterRectangle, field: &impl HomotopyField, opts: &LocateOptions) -> Result<LocatedZero> {
    rect.validate()?;
    let mut cache = Cached { field, table: HashMap::new() };
    let (degree, _) = cache.degree(rect)?;
    if degree == 0 {
        return Err(Error::NoZero(format!(
            "boundary degree of [{}, {}]×[{}, {}] is 0, so the rectangle need not contain a zero",
            rect.t_lo, rect.t_hi, rect.s_lo, rect.s_hi
        )));
    }
    let mut cur = *rect;
    let mut depth = 0;
    loop {
        let (t, s) = cur.center();
        let f = cache.get(&[(t, s)])?[0];
        let f_norm = f[0].hypot(f[1]);
        let done = LocatedZero { s_star: s, t_star: t, f_norm, rect: cur, depth, degree };
        if f_norm <= opts.tol_f || cur.diameter() <= opts.tol_param || depth >= opts.max_depth {
            return Ok(done);
        }
        let mut attempt = cur;
        let mut next = None;
        for k in 0..=opts.retries + 1 {
            let split = if k <= opts.retries { 0.5 } else { OFF_CENTER };
            let mut best: Option<(ParameterRectangle, f64)> = None;
            for q in attempt.quadrants_at(split) {
                match cache.degree(&q) {
                    Ok((d, min)) if d != 0 => {
                        if best.is_none_or(|(_, m)| min < m) {
                            best = Some((q, min));
                        }
                    }
                    Ok(_) | Err(Error::Winding(_)) => {}
                    Err(e) => return Err(e),
                }
            }
            if let Some((q, _)) = best {
                next = Some(q);
                break;
            }
            if k < opts.retries {
                attempt.n_t = 2 * attempt.n_t - 1;
                attempt.n_s = 2 * attempt.n_s - 1;
            }
        }
        match next {
            Some(q) => cur = q,
            None => {
                return Err(Error::NoZero(format!(
                    "no quadrant of [{}, {}]×[{}, {}] carries degree after {} refinements (center |F| = {f_norm:e})",
                    cur.t_lo, cur.t_hi, cur.s_lo, cur.s_hi, opts.retries
                )))
            }
        }
        depth += 1;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn unit_circle_winds_once() {
        let c = PlanarPath::circle(64, 1.0);
        assert_eq!(winding_number(&c).unwrap(), 1);
        assert_eq!(winding_number(&c.reversed()).unwrap(), -1);
    }

    #[test]
    fn loop_away_from_origin_winds_zero() {
        let pts = PlanarPath::circle(16, 0.3).points.into_iter().map(|p| [p[0] + 1.0, p[1]]).collect();
        assert_eq!(winding_number(&PlanarPath::closed(pts)).unwrap(), 0);
    }

    #[test]
    fn inadmissible_paths_are_rejected() {
        assert!(matches!(winding_number(&PlanarPath::circle(3, 1.0)), Ok(1)));
        let antipodal = PlanarPath::closed(vec![[1.0, 0.0], [-1.0, 0.0]]);
        assert!(matches!(winding_number(&antipodal), Err(Error::Winding(_))));
        let through = PlanarPath::closed(vec![[1.0, 0.0], [0.0, 0.0], [0.0, 1.0]]);
        assert!(matches!(winding_number(&through), Err(Error::Winding(_))));
        let open = PlanarPath { closed: false, ..PlanarPath::circle(8, 1.0) };
        assert!(winding_number(&open).is_err());
    }

    #[test]
    fn degenerate_rectangle_has_degree_zero() {
        let r = ParameterRectangle::new(0.0, 3.0, 0.0, 0.0, 8, 8).unwrap();
        assert_eq!(boundary_degree(&r, &|t: f64, _s: f64| [1.0 + t, 0.5]).unwrap(), 0);
    }

    #[test]
    fn rectangle_rejects_bad_shapes() {
        assert!(ParameterRectangle::new(1.0, 1.0, 0.0, 1.0, 8, 8).is_err());
        assert!(ParameterRectangle::new(0.0, 1.0, 1.0, 0.0, 8, 8).is_err());
        assert!(ParameterRectangle::new(0.0, 1.0, 0.0, 1.0, 7, 8).is_err());
    }

    #[test]
    fn boundary_is_counterclockwise_and_closed() {
        let r = ParameterRectangle::new(0.0, 2.0, -1.0, 1.0, 8, 9).unwrap();
        let b = r.boundary();
        assert_eq!(b.len(), 2 * (8 - 1) + 2 * (9 - 1));
        assert_eq!(b[0], (0.0, -1.0));
        assert_eq!(b[7], (2.0, -1.0));
        assert_eq!(b[7 + 8], (2.0, 1.0));
        // identity field traces the boundary itself: degree +1 around an interior point
        let id = |t: f64, s: f64| [t - 1.0, s];
        assert_eq!(boundary_degree(&r, &id).unwrap(), 1);
    }

    #[test]
    fn synthetic_zero_is_recovered() {
        let f = SyntheticField { kappa: 0.7 };
        let r = ParameterRectangle::new(0.1, 2.0, -1.3, 1.85, 8, 8).unwrap();
        assert_eq!(boundary_degree(&r, &f).unwrap(), -1);
        let opts = LocateOptions { tol_f: 1e-9, tol_param: 1e-7, ..Default::default() };
        let z = locate_zero(&r, &f, &opts).unwrap();
        let (t0, s0) = f.zero();
        assert!((z.t_star - t0).abs() < 1e-7 && (z.s_star - s0).abs() < 1e-7, "{z:?}");
        assert_eq!(z.degree, -1);
    }

    #[test]
    fn zero_free_rectangle_is_a_precondition_violation() {
        let f = SyntheticField { kappa: 0.7 };
        let r = ParameterRectangle::new(0.1, 2.0, 0.5, 1.9, 8, 8).unwrap();
        assert!(matches!(locate_zero(&r, &f, &LocateOptions::default()), Err(Error::NoZero(_))));
    }
}
