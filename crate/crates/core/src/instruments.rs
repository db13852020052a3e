//! Instrument families, the measure μ over them, and discretizations.
//!
//! The instrument class is a location–scale family of kernel functions
//! `g(x) = k((x − x̃)/h)` with a bounded nonnegative kernel. With the
//! uniform kernel on `(−1/2, 1/2)` this is exactly the family of interval
//! indicators `1{s < x < s + t}` under the reparametrization
//! `s = x̃ − h/2, t = h` (Jacobian one), which is the family used for the
//! simulation designs together with Lebesgue measure on the triangle
//! `{(s, t) : 0 ≤ s ≤ s + t ≤ 1}`.
//!
//! CvM statistics need a quadrature rule for the μ-integral; KS statistics
//! over intervals in one dimension admit exact optimization because the
//! objective depends on an interval only through the contiguous run of
//! order statistics it contains.

use crate::error::{Error, Result};

/// Nonnegative kernels with support contained in `(−1/2, 1/2)` and unit
/// integral. The open support keeps the uniform kernel pointwise equal to
/// the strict interval indicator.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KernelFn {
    Uniform,
    Epanechnikov,
}

impl KernelFn {
    #[inline]
    pub fn eval(&self, u: f64) -> f64 {
        match self {
            KernelFn::Uniform => {
                if u.abs() < 0.5 {
                    1.0
                } else {
                    0.0
                }
            }
            KernelFn::Epanechnikov => {
                if u.abs() < 0.5 {
                    1.5 * (1.0 - 4.0 * u * u)
                } else {
                    0.0
                }
            }
        }
    }

    /// Half-width of the support.
    pub fn support_halfwidth(&self) -> f64 {
        0.5
    }

    /// `∫ k(u) du` (both kernels are normalized).
    pub fn integral(&self) -> f64 {
        1.0
    }

    /// `∫ k(u)² du`.
    pub fn square_integral(&self) -> f64 {
        match self {
            KernelFn::Uniform => 1.0,
            KernelFn::Epanechnikov => 1.2,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            KernelFn::Uniform => "uniform",
            KernelFn::Epanechnikov => "epanechnikov",
        }
    }
}

/// A single instrument `g(x) = k((x − center)/width)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Instrument {
    pub center: f64,
    pub width: f64,
    pub kernel: KernelFn,
}

impl Instrument {
    /// Box instrument `1{s < x < s + t}` (uniform kernel).
    pub fn from_box(s: f64, t: f64) -> Self {
        Instrument {
            center: s + 0.5 * t,
            width: t,
            kernel: KernelFn::Uniform,
        }
    }

    /// `(s, t)` coordinates of the support interval.
    pub fn as_box(&self) -> (f64, f64) {
        (self.center - 0.5 * self.width, self.width)
    }

    #[inline]
    pub fn eval(&self, x: f64) -> f64 {
        if self.width <= 0.0 {
            return 0.0;
        }
        match self.kernel {
            // Endpoint comparisons, not division: keeps every uniform-kernel
            // code path (grid nodes, prefix-sum ranges, direct sums) on the
            // same window predicate to the last bit.
            KernelFn::Uniform => {
                let half = 0.5 * self.width;
                if self.center - half < x && x < self.center + half {
                    1.0
                } else {
                    0.0
                }
            }
            _ => self.kernel.eval((x - self.center) / self.width),
        }
    }
}

/// Instrument families supported by the statistics.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FamilyKind {
    /// Interval indicators `{1{s < x < s + t} : 0 ≤ s ≤ s + t ≤ 1}`.
    Boxes1d,
    /// Kernel location–scale family on an `(x̃, h)` rectangle.
    KernelLocScale {
        center_range: (f64, f64),
        width_range: (f64, f64),
    },
}

/// An indexed family of nonnegative instruments.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InstrumentFamily {
    pub kind: FamilyKind,
    pub kernel: KernelFn,
}

impl InstrumentFamily {
    /// The simulation default: boxes on `[0, 1]`.
    pub fn boxes_1d() -> Self {
        InstrumentFamily {
            kind: FamilyKind::Boxes1d,
            kernel: KernelFn::Uniform,
        }
    }
}

/// Support of the measure μ in the family's native coordinates.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Support {
    /// `{(s, t) : 0 ≤ s ≤ s + t ≤ 1}` (mass 1/2 under Lebesgue).
    StTriangle,
    /// Axis-aligned rectangle in `(x̃, h)`.
    Rect {
        center_range: (f64, f64),
        width_range: (f64, f64),
    },
}

/// A measure over the instrument family with a bounded density and a tensor
/// quadrature grid.
#[derive(Clone)]
pub struct MuMeasure {
    pub support: Support,
    density: Density,
    pub resolution: (usize, usize),
    kernel: KernelFn,
}

#[derive(Clone)]
enum Density {
    Lebesgue,
    Custom(std::sync::Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>),
}

impl std::fmt::Debug for MuMeasure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("MuMeasure")
            .field("support", &self.support)
            .field("resolution", &self.resolution)
            .finish()
    }
}

/// One quadrature node: an instrument paired with its nonnegative weight
/// `f_μ(node) · clipped cell area`.
#[derive(Debug, Clone, Copy)]
pub struct GridNode {
    pub instrument: Instrument,
    pub weight: f64,
}

impl MuMeasure {
    /// Lebesgue measure on the `(s, t)` triangle — the simulation default.
    pub fn lebesgue_on_triangle(resolution: usize) -> Self {
        MuMeasure {
            support: Support::StTriangle,
            density: Density::Lebesgue,
            resolution: (resolution, resolution),
            kernel: KernelFn::Uniform,
        }
    }

    /// Lebesgue measure on an `(x̃, h)` rectangle for a kernel family.
    pub fn lebesgue_on_rect(
        center_range: (f64, f64),
        width_range: (f64, f64),
        resolution: (usize, usize),
        kernel: KernelFn,
    ) -> Self {
        MuMeasure {
            support: Support::Rect {
                center_range,
                width_range,
            },
            density: Density::Lebesgue,
            resolution,
            kernel,
        }
    }

    /// Overrides the density (must be nonnegative and bounded; it is treated
    /// as zero outside the declared support).
    pub fn with_density<F>(mut self, f: F) -> Self
    where
        F: Fn(f64, f64) -> f64 + Send + Sync + 'static,
    {
        self.density = Density::Custom(std::sync::Arc::new(f));
        self
    }

    fn density_at(&self, a: f64, b: f64) -> f64 {
        match &self.density {
            Density::Lebesgue => 1.0,
            Density::Custom(f) => f(a, b).max(0.0),
        }
    }
}

/// Midpoint-rule quadrature nodes for the μ-integral, restricted to the
/// support. Cells cut by the triangle edge keep their exact clipped area and
/// use the clipped region's centroid as the node, so constant densities
/// integrate exactly.
pub fn enumerate_grid(mu: &MuMeasure) -> Result<Vec<GridNode>> {
    let (ra, rb) = mu.resolution;
    if ra < 2 || rb < 2 {
        return Err(Error::InvalidMeasure(format!(
            "grid resolution must be at least 2 per axis, got ({ra}, {rb})"
        )));
    }
    let mut nodes = Vec::with_capacity(ra * rb);
    match mu.support {
        Support::StTriangle => {
            let da = 1.0 / ra as f64;
            let db = 1.0 / rb as f64;
            for ia in 0..ra {
                for ib in 0..rb {
                    let cell = [ia as f64 * da, (ia + 1) as f64 * da, ib as f64 * db, (ib + 1) as f64 * db];
                    if let Some((area, cs, ct)) = clip_cell_to_triangle(cell) {
                        let w = mu.density_at(cs, ct) * area;
                        nodes.push(GridNode {
                            instrument: Instrument {
                                center: cs + 0.5 * ct,
                                width: ct,
                                kernel: mu.kernel,
                            },
                            weight: w,
                        });
                    }
                }
            }
        }
        Support::Rect {
            center_range: (c0, c1),
            width_range: (w0, w1),
        } => {
            if c1 <= c0 || w1 <= w0 {
                return Err(Error::InvalidMeasure("empty rectangular support".into()));
            }
            let da = (c1 - c0) / ra as f64;
            let db = (w1 - w0) / rb as f64;
            for ia in 0..ra {
                for ib in 0..rb {
                    let cc = c0 + (ia as f64 + 0.5) * da;
                    let cw = w0 + (ib as f64 + 0.5) * db;
                    nodes.push(GridNode {
                        instrument: Instrument {
                            center: cc,
                            width: cw,
                            kernel: mu.kernel,
                        },
                        weight: mu.density_at(cc, cw) * da * db,
                    });
                }
            }
        }
    }
    if nodes.is_empty() {
        return Err(Error::InvalidMeasure("support contains no grid cells".into()));
    }
    Ok(nodes)
}

/// Clips the cell `[a0, a1] × [b0, b1]` against the half-plane `s + t ≤ 1`
/// (intersected with the first quadrant, which the grid already respects).
/// Returns `(area, centroid_s, centroid_t)` or `None` for a fully excluded
/// cell.
fn clip_cell_to_triangle(cell: [f64; 4]) -> Option<(f64, f64, f64)> {
    let [a0, a1, b0, b1] = cell;
    // Entirely inside or outside the diagonal constraint.
    if a1 + b1 <= 1.0 {
        let area = (a1 - a0) * (b1 - b0);
        return Some((area, 0.5 * (a0 + a1), 0.5 * (b0 + b1)));
    }
    if a0 + b0 >= 1.0 {
        return None;
    }
    // Sutherland–Hodgman against s + t <= 1.
    let square = [(a0, b0), (a1, b0), (a1, b1), (a0, b1)];
    let inside = |p: (f64, f64)| p.0 + p.1 <= 1.0;
    let cross = |p: (f64, f64), q: (f64, f64)| {
        // Intersection of segment pq with the line s + t = 1.
        let fp = p.0 + p.1 - 1.0;
        let fq = q.0 + q.1 - 1.0;
        let t = fp / (fp - fq);
        (p.0 + t * (q.0 - p.0), p.1 + t * (q.1 - p.1))
    };
    let mut poly: Vec<(f64, f64)> = Vec::with_capacity(5);
    for i in 0..4 {
        let p = square[i];
        let q = square[(i + 1) % 4];
        match (inside(p), inside(q)) {
            (true, true) => poly.push(q),
            (true, false) => poly.push(cross(p, q)),
            (false, true) => {
                poly.push(cross(p, q));
                poly.push(q);
            }
            (false, false) => {}
        }
    }
    if poly.len() < 3 {
        return None;
    }
    // Shoelace area and centroid.
    let mut twice_area = 0.0;
    let mut cx = 0.0;
    let mut cy = 0.0;
    for i in 0..poly.len() {
        let (x0, y0) = poly[i];
        let (x1, y1) = poly[(i + 1) % poly.len()];
        let w = x0 * y1 - x1 * y0;
        twice_area += w;
        cx += (x0 + x1) * w;
        cy += (y0 + y1) * w;
    }
    let area = 0.5 * twice_area.abs();
    if area <= 0.0 {
        return None;
    }
    Some((area, cx / (3.0 * twice_area), cy / (3.0 * twice_area)))
}

/// A contiguous run of order statistics together with the realizing interval.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntervalArg {
    /// `(s, t)` with `g = 1{s < x < s + t}`; `t = 0` encodes the empty
    /// interval.
    pub s: f64,
    pub t: f64,
    /// Half-open index range `[lo, hi)` into the sorted sample.
    pub lo: usize,
    pub hi: usize,
}

impl IntervalArg {
    fn empty() -> Self {
        IntervalArg {
            s: 0.0,
            t: 0.0,
            lo: 0,
            hi: 0,
        }
    }
}

/// Sorted view of a one-dimensional covariate sample with tied values
/// merged, plus prefix sums for O(1) run statistics.
#[derive(Debug, Clone)]
pub struct SortedCovariates {
    /// Distinct covariate values in increasing order.
    pub values: Vec<f64>,
    /// Multiplicity of each distinct value.
    pub counts: Vec<usize>,
    /// Total number of observations.
    pub n: usize,
    /// Permutation sorting the raw sample (ties in input order).
    pub order: Vec<usize>,
}

impl SortedCovariates {
    pub fn new(xs: &[f64]) -> Result<Self> {
        if xs.is_empty() {
            return Err(Error::InvalidArgument("empty covariate sample".into()));
        }
        let mut order: Vec<usize> = (0..xs.len()).collect();
        order.sort_unstable_by(|&i, &j| xs[i].total_cmp(&xs[j]));
        let mut values = Vec::with_capacity(xs.len());
        let mut counts = Vec::with_capacity(xs.len());
        for &i in &order {
            if values.last() == Some(&xs[i]) {
                *counts.last_mut().unwrap() += 1;
            } else {
                values.push(xs[i]);
                counts.push(1);
            }
        }
        Ok(SortedCovariates {
            values,
            counts,
            n: xs.len(),
            order,
        })
    }

    /// Per-distinct-value aggregated scores: entry `k` sums `score[i]` over
    /// observations tied at `values[k]`.
    pub fn aggregate(&self, scores: &[f64]) -> Vec<f64> {
        let mut agg = vec![0.0; self.values.len()];
        let mut pos = 0;
        for (k, &c) in self.counts.iter().enumerate() {
            for _ in 0..c {
                agg[k] += scores[self.order[pos]];
                pos += 1;
            }
        }
        agg
    }

    /// Interval `(s, t)` realizing the run `[lo, hi)` of distinct values:
    /// endpoints at adjacent midpoints of order statistics, extended to the
    /// unit-interval edges at the extremes.
    pub fn run_interval(&self, lo: usize, hi: usize) -> (f64, f64) {
        if lo >= hi {
            return (0.0, 0.0);
        }
        let m = self.values.len();
        // Strict containment must hold at the extremes too; data in (0, 1)
        // gets endpoints snapped inside the unit interval.
        let left = if lo == 0 {
            if self.values[0] > 0.0 {
                0.5 * self.values[0]
            } else {
                self.values[0] - 1.0
            }
        } else {
            0.5 * (self.values[lo - 1] + self.values[lo])
        };
        let right = if hi == m {
            if self.values[m - 1] < 1.0 {
                0.5 * (self.values[m - 1] + 1.0)
            } else {
                self.values[m - 1] + 1.0
            }
        } else {
            0.5 * (self.values[hi - 1] + self.values[hi])
        };
        (left, right - left)
    }
}

/// Exact minimizer of `E_n[score_i · 1{s < X_i < s + t}]` over all intervals.
///
/// Candidate intervals are the O(n²) runs of order statistics with endpoints
/// at adjacent midpoints, plus the empty interval, which clamps the value at
/// zero from above. Returns the realizing `(s, t)` and the minimized sample
/// mean.
pub fn exact_instrument_supremum_index(xs: &[f64], scores: &[f64]) -> Result<(IntervalArg, f64)> {
    if xs.is_empty() || xs.len() != scores.len() {
        return Err(Error::InvalidArgument(
            "need equally many covariates and scores, at least one".into(),
        ));
    }
    let sorted = SortedCovariates::new(xs)?;
    let agg = sorted.aggregate(scores);
    let m = agg.len();
    let mut prefix = vec![0.0; m + 1];
    for k in 0..m {
        prefix[k + 1] = prefix[k] + agg[k];
    }
    let mut best_sum = 0.0; // empty interval
    let mut best: Option<(usize, usize)> = None;
    for lo in 0..m {
        for hi in (lo + 1)..=m {
            let s = prefix[hi] - prefix[lo];
            if s < best_sum {
                best_sum = s;
                best = Some((lo, hi));
            }
        }
    }
    let n = xs.len() as f64;
    match best {
        None => Ok((IntervalArg::empty(), 0.0)),
        Some((lo, hi)) => {
            let (s, t) = sorted.run_interval(lo, hi);
            Ok((IntervalArg { s, t, lo, hi }, best_sum / n))
        }
    }
}
