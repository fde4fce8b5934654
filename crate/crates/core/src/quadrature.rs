//! Composite Gauss–Legendre integration over the observation window and the
//! exponential-spline moments `e(θ)`, `σ(θ)`, `Σ(θ)`.

use nalgebra::{DMatrix, DVector};

use crate::basis::{BasisSpec, Interval};
use crate::error::{Error, Result};

/// Default number of Gauss nodes on each panel.
pub const DEFAULT_NODES_PER_PANEL: usize = 10;
/// Default number of equal panels per knot interval.
pub const DEFAULT_SUBPANELS: usize = 6;

/// Gauss–Legendre nodes and weights on `[-1, 1]`, computed by Newton
/// iteration on the Legendre polynomial of degree `n`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut nodes = vec![0.0; n];
    let mut weights = vec![0.0; n];
    let m = n.div_ceil(2);
    for i in 0..m {
        // Tricomi's initial guess for the i-th largest root.
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre_with_derivative(n, x);
            dp = d;
            let dx = p / d;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre_with_derivative(n, x);
        dp = if d != 0.0 { d } else { dp };
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = -x;
        nodes[n - 1 - i] = x;
        weights[i] = w;
        weights[n - 1 - i] = w;
    }
    if n % 2 == 1 {
        nodes[n / 2] = 0.0;
    }
    (nodes, weights)
}

fn legendre_with_derivative(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    if n == 0 {
        return (1.0, 0.0);
    }
    for k in 2..=n {
        let kf = k as f64;
        let p2 = ((2.0 * kf - 1.0) * x * p1 - (kf - 1.0) * p0) / kf;
        p0 = p1;
        p1 = p2;
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// A composite Gauss–Legendre rule.
#[derive(Debug, Clone, PartialEq)]
pub struct QuadGrid {
    nodes: Vec<f64>,
    weights: Vec<f64>,
    panels: usize,
    nodes_per_panel: usize,
    domain: Interval,
}

impl QuadGrid {
    /// Rule with panel boundaries at the given strictly increasing breakpoints.
    pub fn from_breakpoints(breaks: &[f64], nodes_per_panel: usize) -> Result<Self> {
        if !(2..=20).contains(&nodes_per_panel) {
            return Err(Error::Config(format!(
                "nodes_per_panel must be in 2..=20, got {nodes_per_panel}"
            )));
        }
        if breaks.len() < 2 || breaks.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(Error::Config("panel breakpoints must be strictly increasing".into()));
        }
        let domain = Interval::new(breaks[0], breaks[breaks.len() - 1])?;
        let (x, w) = gauss_legendre(nodes_per_panel);
        let panels = breaks.len() - 1;
        let mut nodes = Vec::with_capacity(panels * nodes_per_panel);
        let mut weights = Vec::with_capacity(panels * nodes_per_panel);
        for pw in breaks.windows(2) {
            let half = 0.5 * (pw[1] - pw[0]);
            let mid = 0.5 * (pw[1] + pw[0]);
            for (xi, wi) in x.iter().zip(&w) {
                nodes.push(mid + half * xi);
                weights.push(half * wi);
            }
        }
        Ok(Self {
            nodes,
            weights,
            panels,
            nodes_per_panel,
            domain,
        })
    }

    /// Rule on the knot intervals of `basis`, each split into
    /// [`DEFAULT_SUBPANELS`] equal panels, so the integrand `exp(θᵀβ)` is
    /// smooth on every panel.
    pub fn for_basis(basis: &BasisSpec, nodes_per_panel: usize) -> Result<Self> {
        Self::for_basis_with(basis, DEFAULT_SUBPANELS, nodes_per_panel)
    }

    /// Like [`QuadGrid::for_basis`] with `subpanels` panels per knot interval.
    pub fn for_basis_with(basis: &BasisSpec, subpanels: usize, nodes_per_panel: usize) -> Result<Self> {
        if subpanels == 0 {
            return Err(Error::Config("at least one panel per knot interval is required".into()));
        }
        let knots = basis.breakpoints();
        let mut breaks = vec![knots[0]];
        for w in knots.windows(2) {
            let h = (w[1] - w[0]) / subpanels as f64;
            breaks.extend((1..subpanels).map(|i| w[0] + h * i as f64));
            breaks.push(w[1]);
        }
        Self::from_breakpoints(&breaks, nodes_per_panel)
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn panels(&self) -> usize {
        self.panels
    }

    pub fn nodes_per_panel(&self) -> usize {
        self.nodes_per_panel
    }

    pub fn domain(&self) -> Interval {
        self.domain
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Integral of `f` over the domain.
    pub fn integrate_fn(&self, f: impl Fn(f64) -> f64) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&u, &w)| w * f(u))
            .sum()
    }
}

/// Composite rule with `panels` equal panels over `domain`.
pub fn make_grid(domain: Interval, panels: usize, nodes_per_panel: usize) -> Result<QuadGrid> {
    if panels == 0 {
        return Err(Error::Config("at least one quadrature panel is required".into()));
    }
    let h = domain.length() / panels as f64;
    let mut breaks: Vec<f64> = (0..panels).map(|i| domain.lo + h * i as f64).collect();
    breaks.push(domain.hi);
    QuadGrid::from_breakpoints(&breaks, nodes_per_panel)
}

/// Weighted sum of node values.
pub fn integrate(values: &[f64], grid: &QuadGrid) -> Result<f64> {
    if values.len() != grid.len() {
        return Err(Error::Dimension {
            what: "quadrature values",
            expected: grid.len(),
            found: values.len(),
        });
    }
    Ok(values.iter().zip(grid.weights()).map(|(v, w)| v * w).sum())
}

/// `∫exp(θᵀβ)`, `∫exp(θᵀβ)β` and `∫exp(θᵀβ)ββᵀ`.
#[derive(Debug, Clone, PartialEq)]
pub struct Moments {
    pub e: f64,
    pub sigma: DVector<f64>,
    pub sigma_mat: DMatrix<f64>,
}

/// Basis values tabulated once on the nodes of a quadrature grid.
#[derive(Debug, Clone)]
pub struct BasisTable {
    basis: BasisSpec,
    grid: QuadGrid,
    starts: Vec<usize>,
    local: Vec<f64>,
}

impl BasisTable {
    pub fn new(basis: &BasisSpec, grid: &QuadGrid) -> Result<Self> {
        let dom = basis.domain();
        let gd = grid.domain();
        if (dom.lo - gd.lo).abs() > 1e-12 || (dom.hi - gd.hi).abs() > 1e-12 {
            return Err(Error::Config(
                "quadrature grid and basis must share the same domain".into(),
            ));
        }
        let k1 = basis.degree() + 1;
        let mut starts = Vec::with_capacity(grid.len());
        let mut local = vec![0.0; grid.len() * k1];
        for (g, &u) in grid.nodes().iter().enumerate() {
            starts.push(basis.eval_local(u, &mut local[g * k1..(g + 1) * k1]));
        }
        Ok(Self {
            basis: basis.clone(),
            grid: grid.clone(),
            starts,
            local,
        })
    }

    pub fn basis(&self) -> &BasisSpec {
        &self.basis
    }

    pub fn grid(&self) -> &QuadGrid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.basis.dim()
    }

    fn row(&self, g: usize) -> (usize, &[f64]) {
        let k1 = self.basis.degree() + 1;
        (self.starts[g], &self.local[g * k1..(g + 1) * k1])
    }

    /// Spline `coeffsᵀβ` at every node.
    pub fn spline_at_nodes(&self, coeffs: &[f64]) -> Vec<f64> {
        (0..self.grid.len())
            .map(|g| {
                let (s, vals) = self.row(g);
                vals.iter().zip(&coeffs[s..]).map(|(b, c)| b * c).sum()
            })
            .collect()
    }

    /// Dense `β(u_g)` for node `g`.
    pub fn dense_row(&self, g: usize) -> Vec<f64> {
        let (s, vals) = self.row(g);
        let mut out = vec![0.0; self.dim()];
        out[s..s + vals.len()].copy_from_slice(vals);
        out
    }

    /// `∫exp(θᵀβ)` only.
    pub fn integral_exp(&self, theta: &[f64]) -> f64 {
        self.spline_at_nodes(theta)
            .iter()
            .zip(self.grid.weights())
            .map(|(s, w)| w * s.exp())
            .sum()
    }

    /// Moments with respect to an arbitrary positive weight `ω(u_g)` given at
    /// the nodes: `∫ω`, `∫ωβ`, `∫ωββᵀ`.
    pub fn weighted_moments(&self, node_weights: &[f64]) -> Moments {
        let p = self.dim();
        let mut e = 0.0;
        let mut sigma = DVector::zeros(p);
        let mut sigma_mat = DMatrix::zeros(p, p);
        for (g, &qw) in self.grid.weights().iter().enumerate() {
            let w = qw * node_weights[g];
            let (s, vals) = self.row(g);
            e += w;
            for (a, &va) in vals.iter().enumerate() {
                sigma[s + a] += w * va;
                for (b, &vb) in vals.iter().enumerate().skip(a) {
                    sigma_mat[(s + a, s + b)] += w * va * vb;
                }
            }
        }
        for a in 0..p {
            for b in 0..a {
                sigma_mat[(a, b)] = sigma_mat[(b, a)];
            }
        }
        Moments {
            e,
            sigma,
            sigma_mat,
        }
    }

    /// Moments of the tilted weight `exp(θᵀβ)`.
    pub fn moments(&self, theta: &[f64]) -> Moments {
        let w: Vec<f64> = self.spline_at_nodes(theta).iter().map(|s| s.exp()).collect();
        self.weighted_moments(&w)
    }

    /// Gram matrix `∫ββᵀ`.
    pub fn gram(&self) -> DMatrix<f64> {
        self.weighted_moments(&vec![1.0; self.grid.len()]).sigma_mat
    }
}

/// Moments of `exp(θᵀβ)` over the grid.
pub fn moments(basis: &BasisSpec, grid: &QuadGrid, theta: &[f64]) -> Result<Moments> {
    if theta.len() != basis.dim() {
        return Err(Error::Dimension {
            what: "theta",
            expected: basis.dim(),
            found: theta.len(),
        });
    }
    Ok(BasisTable::new(basis, grid)?.moments(theta))
}
