//! Coarse-grained observable families and the microstate decomposition of a
//! state behind them.
//!
//! A `ProjectorFamily` is an ordered set of mutually orthogonal projectors
//! ("cells") over the computational basis. Decomposing a pure state against a
//! family yields one orthonormal microstate per occupied cell together with
//! complex amplitudes `c_i` satisfying `c_i = <Psi_i|Psi>`; the weights
//! `|c_i|^2` are the cell occupation probabilities. Mixed states decompose
//! into diagonal blocks with weights `A_ii` and raw cross blocks
//! `B_ij = Pi_i rho Pi_j`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64 as C64;

use crate::error::{Error, Result};
use crate::linalg::{expectation, DensityMatrix, Eigensystem, HermitianOperator, StateVector};

/// Default occupation threshold on weights `|c_i|^2`. Cells below it carry
/// weight zero and no microstate vector.
pub const EPS_OCC: f64 = 1e-12;

/// Relative floor when scanning for the first nonzero component of a cell
/// vector (phase convention anchor).
const PHASE_FLOOR: f64 = 1e-12;

/// Boundary condition of a spatial grid.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Boundary {
    Periodic,
    HardWall,
}

/// Geometry of the underlying 1D grid for position-cell families.
///
/// Grid points sit at midpoints: `x_g = origin + (g + 1/2) * spacing`, so the
/// shared boundary between two adjacent cells falls exactly halfway between
/// the last point of one cell and the first point of the next.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct GridGeometry {
    pub origin: f64,
    pub spacing: f64,
    pub boundary: Boundary,
}

impl GridGeometry {
    /// Position of grid point `g`.
    pub fn point(&self, g: usize) -> f64 {
        self.origin + (g as f64 + 0.5) * self.spacing
    }
}

/// Per-cell metadata.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CellLabel {
    /// Position interval `[lo, hi]`.
    Interval { lo: f64, hi: f64 },
    /// Free-form name (device states, merged cells, ...).
    Name(String),
    /// Pair of parent-cell indices in a refined (product) family.
    Pair(usize, usize),
}

impl CellLabel {
    pub fn center(&self) -> Option<f64> {
        match self {
            CellLabel::Interval { lo, hi } => Some(0.5 * (lo + hi)),
            _ => None,
        }
    }
}

impl std::fmt::Display for CellLabel {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CellLabel::Interval { lo, hi } => write!(f, "[{lo}, {hi}]"),
            CellLabel::Name(s) => write!(f, "{s}"),
            CellLabel::Pair(a, b) => write!(f, "({a}, {b})"),
        }
    }
}

/// Ordered family of mutually orthogonal projectors, each given by an index
/// set over the computational basis.
///
/// Index-set cells are exactly orthogonal and idempotent by construction;
/// the corresponding matrix projector is available through
/// [`ProjectorFamily::projector_matrix`] when an explicit operator is needed.
#[derive(Debug, Clone, PartialEq)]
pub struct ProjectorFamily {
    dim: usize,
    cells: Vec<Vec<usize>>,
    labels: Vec<CellLabel>,
    resolution: f64,
    exhaustive: bool,
    grid: Option<GridGeometry>,
}

impl ProjectorFamily {
    /// Builds a family from explicit index cells. Cells must be disjoint and
    /// in range; the exhaustive flag is computed from coverage.
    pub fn from_index_cells(
        dim: usize,
        cells: Vec<Vec<usize>>,
        labels: Vec<CellLabel>,
        resolution: f64,
    ) -> Result<Self> {
        if labels.len() != cells.len() {
            return Err(Error::Config(format!(
                "family: {} labels for {} cells",
                labels.len(),
                cells.len()
            )));
        }
        let mut seen = vec![false; dim];
        let mut covered = 0usize;
        let mut cells = cells;
        for cell in &mut cells {
            cell.sort_unstable();
            for &g in cell.iter() {
                if g >= dim {
                    return Err(Error::Config(format!(
                        "family: index {g} out of range for dim {dim}"
                    )));
                }
                if seen[g] {
                    return Err(Error::Config(format!(
                        "family: index {g} appears in two cells; projectors must be orthogonal"
                    )));
                }
                seen[g] = true;
                covered += 1;
            }
        }
        Ok(Self {
            dim,
            cells,
            labels,
            resolution,
            exhaustive: covered == dim,
            grid: None,
        })
    }

    fn with_grid(mut self, grid: GridGeometry) -> Self {
        self.grid = Some(grid);
        self
    }

    /// Attaches grid geometry (used when deserializing position families).
    pub fn with_grid_geometry(self, grid: GridGeometry) -> Self {
        self.with_grid(grid)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    pub fn cell(&self, i: usize) -> &[usize] {
        &self.cells[i]
    }

    pub fn cells(&self) -> &[Vec<usize>] {
        &self.cells
    }

    pub fn label(&self, i: usize) -> &CellLabel {
        &self.labels[i]
    }

    pub fn labels(&self) -> &[CellLabel] {
        &self.labels
    }

    pub fn resolution(&self) -> f64 {
        self.resolution
    }

    pub fn is_exhaustive(&self) -> bool {
        self.exhaustive
    }

    pub fn grid(&self) -> Option<&GridGeometry> {
        self.grid.as_ref()
    }

    /// Cell containing basis index `g`, if any.
    pub fn cell_of(&self, g: usize) -> Option<usize> {
        self.cells.iter().position(|c| c.binary_search(&g).is_ok())
    }

    /// Cell centers from interval labels, when every label is an interval.
    pub fn cell_centers(&self) -> Option<Vec<f64>> {
        self.labels.iter().map(|l| l.center()).collect()
    }

    /// Dense matrix form of projector `i`.
    pub fn projector_matrix(&self, i: usize) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for &g in &self.cells[i] {
            m[(g, g)] = C64::new(1.0, 0.0);
        }
        m
    }

    /// Applies projector `i` to a vector (component mask).
    pub fn apply_projector(&self, i: usize, v: &DVector<C64>) -> DVector<C64> {
        let mut out = DVector::zeros(self.dim);
        for &g in &self.cells[i] {
            out[g] = v[g];
        }
        out
    }

    /// Lifts a family on factor A to `A (x) E`: each cell index `a` becomes
    /// the block `{a*dim_e + e}`.
    pub fn lift_left(&self, dim_e: usize) -> ProjectorFamily {
        let cells = self
            .cells
            .iter()
            .map(|c| {
                c.iter()
                    .flat_map(|&a| (0..dim_e).map(move |e| a * dim_e + e))
                    .collect()
            })
            .collect();
        ProjectorFamily {
            dim: self.dim * dim_e,
            cells,
            labels: self.labels.clone(),
            resolution: self.resolution,
            exhaustive: self.exhaustive,
            grid: None,
        }
    }

    /// Lifts a family on factor E to `A (x) E`.
    pub fn lift_right(&self, dim_a: usize) -> ProjectorFamily {
        let cells = self
            .cells
            .iter()
            .map(|c| {
                (0..dim_a)
                    .flat_map(|a| c.iter().map(move |&e| a * self.dim + e))
                    .collect()
            })
            .collect();
        ProjectorFamily {
            dim: self.dim * dim_a,
            cells,
            labels: self.labels.clone(),
            resolution: self.resolution,
            exhaustive: self.exhaustive,
            grid: None,
        }
    }

    /// Common refinement of two commuting families on the same space: cell
    /// `(a, b)` of the result is the intersection of cell `a` of `self` with
    /// cell `b` of `other`, stored at index `a * other.cell_count() + b`.
    /// Empty intersections are kept so the product indexing stays uniform.
    pub fn refine(&self, other: &ProjectorFamily) -> Result<ProjectorFamily> {
        if self.dim != other.dim {
            return Err(Error::Config(format!(
                "refine: dims {} vs {}",
                self.dim, other.dim
            )));
        }
        let mut cells = Vec::with_capacity(self.cell_count() * other.cell_count());
        let mut labels = Vec::with_capacity(cells.capacity());
        for (a, ca) in self.cells.iter().enumerate() {
            for (b, cb) in other.cells.iter().enumerate() {
                let inter: Vec<usize> = ca
                    .iter()
                    .copied()
                    .filter(|g| cb.binary_search(g).is_ok())
                    .collect();
                cells.push(inter);
                labels.push(CellLabel::Pair(a, b));
            }
        }
        let covered: usize = cells.iter().map(|c| c.len()).sum();
        Ok(ProjectorFamily {
            dim: self.dim,
            cells,
            labels,
            resolution: self.resolution.min(other.resolution),
            exhaustive: covered == self.dim,
            grid: None,
        })
    }

    /// Max pairwise orthogonality/idempotency defect of the cell projectors.
    /// Index-set cells are exact, so this reports 0; it exists so invariant
    /// suites can assert the projector algebra uniformly.
    pub fn orthogonality_defect(&self) -> f64 {
        let mut owner = vec![usize::MAX; self.dim];
        for (i, cell) in self.cells.iter().enumerate() {
            for &g in cell {
                if owner[g] != usize::MAX && owner[g] != i {
                    return 1.0;
                }
                owner[g] = i;
            }
        }
        0.0
    }
}

/// Splits `grid_points` into `cells_count` contiguous position cells over
/// `domain = [x_lo, x_hi]`.
pub fn build_position_projectors(
    grid_points: usize,
    cells_count: usize,
    domain: (f64, f64),
    boundary: Boundary,
) -> Result<ProjectorFamily> {
    if cells_count == 0 || grid_points == 0 {
        return Err(Error::Config(
            "grid and cell counts must be positive".into(),
        ));
    }
    if grid_points % cells_count != 0 {
        return Err(Error::Config(format!(
            "grid of {grid_points} points does not divide into {cells_count} cells"
        )));
    }
    let (x_lo, x_hi) = domain;
    if x_hi <= x_lo {
        return Err(Error::Config(format!("empty domain [{x_lo}, {x_hi}]")));
    }
    let m = grid_points / cells_count;
    let delta_x = (x_hi - x_lo) / cells_count as f64;
    let spacing = (x_hi - x_lo) / grid_points as f64;
    let cells: Vec<Vec<usize>> = (0..cells_count)
        .map(|i| (i * m..(i + 1) * m).collect())
        .collect();
    let labels: Vec<CellLabel> = (0..cells_count)
        .map(|i| CellLabel::Interval {
            lo: x_lo + i as f64 * delta_x,
            hi: x_lo + (i + 1) as f64 * delta_x,
        })
        .collect();
    Ok(
        ProjectorFamily::from_index_cells(grid_points, cells, labels, delta_x)?.with_grid(
            GridGeometry {
                origin: x_lo,
                spacing,
                boundary,
            },
        ),
    )
}

/// Coarse-grained observable `sum_i value_i Pi_i` over a projector family.
#[derive(Debug, Clone)]
pub struct CoarseObservable {
    family: ProjectorFamily,
    values: Vec<f64>,
}

impl CoarseObservable {
    pub fn family(&self) -> &ProjectorFamily {
        &self.family
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn value(&self, cell: usize) -> f64 {
        self.values[cell]
    }

    /// Largest eigenvalue magnitude; used to scale comparison tolerances.
    pub fn norm(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }

    /// Dense operator form (diagonal in the family's basis).
    pub fn operator(&self) -> HermitianOperator {
        let mut m = DMatrix::zeros(self.family.dim(), self.family.dim());
        for (i, cell) in self.family.cells().iter().enumerate() {
            for &g in cell {
                m[(g, g)] = C64::new(self.values[i], 0.0);
            }
        }
        HermitianOperator::new(m).expect("diagonal real matrix is Hermitian")
    }

    /// Expectation value of the observable in a pure state.
    pub fn expectation(&self, psi: &StateVector) -> Result<f64> {
        expectation(&self.operator(), psi)
    }
}

/// Midpoint-rule coarse observable: cell `i` (1-based `i` in the usual
/// convention) carries eigenvalue `lambda0 + (i - 1/2) * delta`.
pub fn build_coarse_observable(
    family: &ProjectorFamily,
    lambda0: f64,
    delta: f64,
) -> CoarseObservable {
    let values = (0..family.cell_count())
        .map(|i| lambda0 + (i as f64 + 0.5) * delta)
        .collect();
    CoarseObservable {
        family: family.clone(),
        values,
    }
}

/// Microstate decomposition of a pure state against a projector family.
///
/// Arrays are indexed by cell. Unoccupied cells (weight below the occupation
/// threshold) carry amplitude zero and no vector. When built by
/// [`decompose_pure`] the source state and index cells are retained, which
/// enables exact fast paths in the rate evaluators.
#[derive(Debug, Clone)]
pub struct MicrostateDecomposition {
    dim: usize,
    amplitudes: Vec<C64>,
    vectors: Vec<Option<DVector<C64>>>,
    eps_occ: f64,
    source: Option<DecompositionSource>,
}

#[derive(Debug, Clone)]
struct DecompositionSource {
    psi: DVector<C64>,
    cells: Vec<Vec<usize>>,
}

impl MicrostateDecomposition {
    /// Assembles a decomposition from explicit amplitudes and vectors,
    /// checking pairwise orthonormality of the occupied microstates.
    pub fn from_parts(
        dim: usize,
        amplitudes: Vec<C64>,
        vectors: Vec<Option<DVector<C64>>>,
        eps_occ: f64,
    ) -> Result<Self> {
        if amplitudes.len() != vectors.len() {
            return Err(Error::Shape(
                "amplitudes and vectors must have one entry per cell".into(),
            ));
        }
        let mut amplitudes = amplitudes;
        let mut vectors = vectors;
        for i in 0..amplitudes.len() {
            if amplitudes[i].norm_sqr() < eps_occ {
                amplitudes[i] = C64::new(0.0, 0.0);
                vectors[i] = None;
            }
        }
        let occupied: Vec<usize> = (0..amplitudes.len())
            .filter(|&i| amplitudes[i].norm_sqr() >= eps_occ)
            .collect();
        for &i in &occupied {
            let vi = vectors[i]
                .as_ref()
                .ok_or_else(|| Error::Shape(format!("occupied cell {i} lacks a vector")))?;
            if vi.len() != dim {
                return Err(Error::Shape(format!("cell {i} vector has wrong dim")));
            }
            for &j in &occupied {
                if j > i {
                    continue;
                }
                let vj = vectors[j].as_ref().unwrap();
                let d = vi.dotc(vj);
                let expect = if i == j { 1.0 } else { 0.0 };
                if (d - C64::new(expect, 0.0)).norm() > 1e-10 {
                    return Err(Error::Numerical(format!(
                        "microstates {i},{j} not orthonormal: <i|j> = {d}"
                    )));
                }
            }
        }
        Ok(Self {
            dim,
            amplitudes,
            vectors,
            eps_occ,
            source: None,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// Number of cells (occupied or not).
    pub fn cell_count(&self) -> usize {
        self.amplitudes.len()
    }

    /// Number of occupied microstates.
    pub fn count(&self) -> usize {
        self.occupied_cells().count()
    }

    pub fn eps_occ(&self) -> f64 {
        self.eps_occ
    }

    pub fn is_occupied(&self, cell: usize) -> bool {
        self.vectors[cell].is_some()
    }

    pub fn occupied_cells(&self) -> impl Iterator<Item = usize> + '_ {
        (0..self.cell_count()).filter(|&i| self.is_occupied(i))
    }

    /// Amplitude `c_i = <Psi_i|Psi>`; zero for unoccupied cells.
    pub fn amplitude(&self, cell: usize) -> C64 {
        self.amplitudes[cell]
    }

    /// Weight `|c_i|^2`.
    pub fn weight(&self, cell: usize) -> f64 {
        self.amplitudes[cell].norm_sqr()
    }

    pub fn weights(&self) -> Vec<f64> {
        self.amplitudes.iter().map(|c| c.norm_sqr()).collect()
    }

    /// Unit microstate vector |Psi_i>, if the cell is occupied.
    pub fn microstate(&self, cell: usize) -> Option<&DVector<C64>> {
        self.vectors[cell].as_ref()
    }

    /// Unnormalized cell component `c_i |Psi_i> = Pi_i |Psi>`.
    pub fn cell_component(&self, cell: usize) -> Option<DVector<C64>> {
        self.vectors[cell]
            .as_ref()
            .map(|v| v.scale_c(self.amplitudes[cell]))
    }

    /// Index cells of the source family, when family-derived.
    pub fn source_cells(&self) -> Option<&[Vec<usize>]> {
        self.source.as_ref().map(|s| s.cells.as_slice())
    }

    /// Source state, when family-derived.
    pub fn source_state(&self) -> Option<&DVector<C64>> {
        self.source.as_ref().map(|s| &s.psi)
    }

    /// `sum_i c_i |Psi_i>`; equals the source state up to occupation leakage
    /// for exhaustive families.
    pub fn reconstruct(&self) -> DVector<C64> {
        let mut out = DVector::zeros(self.dim);
        for i in self.occupied_cells() {
            out += self.vectors[i]
                .as_ref()
                .unwrap()
                .scale_c(self.amplitudes[i]);
        }
        out
    }

    /// Expectation `<Psi_i|O|Psi_i>` in microstate `i`.
    pub fn microstate_expectation(&self, cell: usize, o: &HermitianOperator) -> Option<f64> {
        let v = self.vectors[cell].as_ref()?;
        Some(v.dotc(&(o.matrix() * v)).re)
    }
}

trait ScaleC {
    fn scale_c(&self, c: C64) -> DVector<C64>;
}

impl ScaleC for DVector<C64> {
    fn scale_c(&self, c: C64) -> DVector<C64> {
        self.map(|z| z * c)
    }
}

/// Phase-fixes a cell vector: returns `(c, v)` with `c v = raw`, `|v| = 1`
/// and the first (relatively) nonzero component of `v` real positive.
fn phase_fix(raw: &DVector<C64>, norm: f64) -> (C64, DVector<C64>) {
    let anchor = raw
        .iter()
        .find(|z| z.norm() > PHASE_FLOOR * norm)
        .copied()
        .unwrap_or(C64::new(1.0, 0.0));
    let phase = anchor / anchor.norm();
    let c = phase * norm;
    let v = raw.map(|z| z * phase.conj() / norm);
    (c, v)
}

/// Splits a pure state into one microstate per occupied cell.
///
/// For each cell with `||Pi_i psi||^2 >= eps_occ` the microstate is the
/// normalized projection, with the phase convention that its first nonzero
/// component is real positive and `c_i` absorbs the phase, so
/// `c_i |Psi_i> = Pi_i |psi>` exactly. One microstate per occupied cell is
/// the maximal-entropy choice for a commuting family.
pub fn decompose_pure(
    psi: &StateVector,
    family: &ProjectorFamily,
    eps_occ: f64,
) -> Result<MicrostateDecomposition> {
    if psi.dim() != family.dim() {
        return Err(Error::Shape(format!(
            "decompose: state dim {} vs family dim {}",
            psi.dim(),
            family.dim()
        )));
    }
    let n_cells = family.cell_count();
    let mut amplitudes = vec![C64::new(0.0, 0.0); n_cells];
    let mut vectors: Vec<Option<DVector<C64>>> = vec![None; n_cells];
    for i in 0..n_cells {
        let raw = family.apply_projector(i, psi.amplitudes());
        let norm_sq: f64 = family.cell(i).iter().map(|&g| raw[g].norm_sqr()).sum();
        if norm_sq < eps_occ {
            continue;
        }
        let (c, v) = phase_fix(&raw, norm_sq.sqrt());
        amplitudes[i] = c;
        vectors[i] = Some(v);
    }
    Ok(MicrostateDecomposition {
        dim: psi.dim(),
        amplitudes,
        vectors,
        eps_occ,
        source: Some(DecompositionSource {
            psi: psi.amplitudes().clone(),
            cells: family.cells().to_vec(),
        }),
    })
}

/// Ensemble entropy `-sum_i |c_i|^2 ln |c_i|^2` with `0 ln 0 = 0`.
pub fn ensemble_entropy(decomp: &MicrostateDecomposition) -> f64 {
    decomp
        .weights()
        .iter()
        .filter(|&&w| w > 0.0)
        .map(|&w| -w * w.ln())
        .sum()
}

/// Mixed-state decomposition: weights `A_ii = tr(Pi_i rho Pi_i)` and access
/// to the diagonal blocks `rho_ii` and raw cross blocks `B_ij = Pi_i rho Pi_j`.
///
/// Off-diagonal blocks are kept unnormalized; only the product
/// `A_ij rho_ij = B_ij` is ever consumed downstream, so no convention for the
/// split is imposed.
#[derive(Debug, Clone)]
pub struct MixedDecomposition {
    dim: usize,
    cells: Vec<Vec<usize>>,
    weights: Vec<f64>,
    rho: DMatrix<C64>,
    eps_occ: f64,
}

impl MixedDecomposition {
    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn cell_count(&self) -> usize {
        self.cells.len()
    }

    pub fn cells(&self) -> &[Vec<usize>] {
        &self.cells
    }

    pub fn eps_occ(&self) -> f64 {
        self.eps_occ
    }

    /// Weight `A_ii`.
    pub fn weight(&self, cell: usize) -> f64 {
        self.weights[cell]
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub fn is_occupied(&self, cell: usize) -> bool {
        self.weights[cell] >= self.eps_occ
    }

    /// Normalized diagonal block `rho_ii = Pi_i rho Pi_i / A_ii` (full-dim,
    /// supported on cell `i`); `None` for unoccupied cells.
    pub fn diagonal_block(&self, cell: usize) -> Option<DMatrix<C64>> {
        if !self.is_occupied(cell) {
            return None;
        }
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for &g in &self.cells[cell] {
            for &h in &self.cells[cell] {
                m[(g, h)] = self.rho[(g, h)] / self.weights[cell];
            }
        }
        Some(m)
    }

    /// Raw block `B_ij = Pi_i rho Pi_j` (full-dim, unnormalized).
    pub fn raw_block(&self, i: usize, j: usize) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for &g in &self.cells[i] {
            for &h in &self.cells[j] {
                m[(g, h)] = self.rho[(g, h)];
            }
        }
        m
    }

    pub(crate) fn rho(&self) -> &DMatrix<C64> {
        &self.rho
    }
}

/// Decomposes a density matrix against a projector family.
pub fn decompose_mixed(
    rho: &DensityMatrix,
    family: &ProjectorFamily,
    eps_occ: f64,
) -> Result<MixedDecomposition> {
    if rho.dim() != family.dim() {
        return Err(Error::Shape(format!(
            "decompose_mixed: rho dim {} vs family dim {}",
            rho.dim(),
            family.dim()
        )));
    }
    let weights: Vec<f64> = (0..family.cell_count())
        .map(|i| {
            family
                .cell(i)
                .iter()
                .map(|&g| rho.matrix()[(g, g)].re)
                .sum()
        })
        .collect();
    Ok(MixedDecomposition {
        dim: rho.dim(),
        cells: family.cells().to_vec(),
        weights,
        rho: rho.matrix().clone(),
        eps_occ,
    })
}

/// Outcome of the pairwise distinguishability test.
#[derive(Debug, Clone)]
pub struct NondegeneracyReport {
    /// Occupied pairs `(k, l)` that no observable distinguishes; callers
    /// should merge them.
    pub degenerate_pairs: Vec<(usize, usize)>,
    /// Number of occupied pairs examined.
    pub pairs_checked: usize,
}

impl NondegeneracyReport {
    pub fn all_distinguishable(&self) -> bool {
        self.degenerate_pairs.is_empty()
    }
}

/// Checks, for every pair of occupied microstates, whether at least one
/// observable has a matrix block differing from `mu * identity` beyond
/// `tol` (scaled by the observable norm). The candidate shared value `mu` is
/// taken from the first state of the pair.
pub fn verify_nondegeneracy(
    decomp: &MicrostateDecomposition,
    observables: &[CoarseObservable],
    tol: f64,
) -> NondegeneracyReport {
    let occupied: Vec<usize> = decomp.occupied_cells().collect();
    let mut degenerate = Vec::new();
    let mut pairs = 0usize;
    for (a, &k) in occupied.iter().enumerate() {
        for &l in &occupied[a + 1..] {
            pairs += 1;
            let vk = decomp.microstate(k).unwrap();
            let vl = decomp.microstate(l).unwrap();
            let mut distinguished = false;
            for obs in observables {
                let o = obs.operator();
                let scale = tol * obs.norm().max(1.0);
                let okk = vk.dotc(&o.apply(vk));
                let okl = vk.dotc(&o.apply(vl));
                let olk = vl.dotc(&o.apply(vk));
                let oll = vl.dotc(&o.apply(vl));
                let mu = okk;
                if okl.norm() > scale || olk.norm() > scale || (oll - mu).norm() > scale {
                    distinguished = true;
                    break;
                }
            }
            if !distinguished {
                degenerate.push((k, l));
            }
        }
    }
    NondegeneracyReport {
        degenerate_pairs: degenerate,
        pairs_checked: pairs,
    }
}

/// Merges the degenerate pair `(k, l)`: the normalized combination
/// `c_k|Psi_k> + c_l|Psi_l>` replaces the pair in slot `min(k, l)`, and the
/// other slot becomes unoccupied.
pub fn merge_microstates(
    decomp: &MicrostateDecomposition,
    k: usize,
    l: usize,
) -> Result<MicrostateDecomposition> {
    if k == l || !decomp.is_occupied(k) || !decomp.is_occupied(l) {
        return Err(Error::Config(format!(
            "merge requires two distinct occupied cells, got {k}, {l}"
        )));
    }
    let combined = decomp.cell_component(k).unwrap() + decomp.cell_component(l).unwrap();
    let norm = combined.norm();
    if norm * norm < decomp.eps_occ {
        return Err(Error::Numerical(
            "merged component has vanishing norm".into(),
        ));
    }
    let (c, v) = phase_fix(&combined, norm);
    let keep = k.min(l);
    let drop = k.max(l);
    let mut amplitudes = decomp.amplitudes.clone();
    let mut vectors = decomp.vectors.clone();
    amplitudes[keep] = c;
    vectors[keep] = Some(v);
    amplitudes[drop] = C64::new(0.0, 0.0);
    vectors[drop] = None;
    Ok(MicrostateDecomposition {
        dim: decomp.dim,
        amplitudes,
        vectors,
        eps_occ: decomp.eps_occ,
        source: None,
    })
}

/// Doubles the resolution scale: `Pi'_i = Pi_{2i} + Pi_{2i+1}` (0-based).
pub fn block_projectors(family: &ProjectorFamily) -> Result<ProjectorFamily> {
    let n = family.cell_count();
    if n % 2 != 0 {
        return Err(Error::Config(format!(
            "blocking requires an even cell count, got {n}"
        )));
    }
    let mut cells = Vec::with_capacity(n / 2);
    let mut labels = Vec::with_capacity(n / 2);
    for i in 0..n / 2 {
        let mut merged: Vec<usize> = family.cell(2 * i).to_vec();
        merged.extend_from_slice(family.cell(2 * i + 1));
        merged.sort_unstable();
        cells.push(merged);
        labels.push(merge_labels(family.label(2 * i), family.label(2 * i + 1)));
    }
    let mut out =
        ProjectorFamily::from_index_cells(family.dim(), cells, labels, family.resolution() * 2.0)?;
    if let Some(grid) = family.grid() {
        out = out.with_grid(*grid);
    }
    Ok(out)
}

fn merge_labels(a: &CellLabel, b: &CellLabel) -> CellLabel {
    match (a, b) {
        (CellLabel::Interval { lo, .. }, CellLabel::Interval { hi, .. }) => {
            CellLabel::Interval { lo: *lo, hi: *hi }
        }
        _ => CellLabel::Name(format!("{a}+{b}")),
    }
}

/// Complexified u(N) generator family acting on a Hilbert space that contains
/// the N^2-dimensional adjoint block at the leading indices.
///
/// Basis convention on the block: |i j> sits at flat index `i * n + j`, and
/// the generator `O_ij` acts as `O_ij |k l> = delta_jk |i l>`, i.e. left
/// multiplication by the matrix unit `E_ij`.
#[derive(Debug, Clone)]
pub struct UnAlgebra {
    n: usize,
    dim: usize,
}

impl UnAlgebra {
    /// Standard realization on a space of dimension `n^2 + extra`.
    pub fn standard(n: usize, extra: usize) -> Self {
        Self {
            n,
            dim: n * n + extra,
        }
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    fn block_index(&self, i: usize, j: usize) -> usize {
        i * self.n + j
    }

    /// Dense matrix of the generator `O_ij`.
    pub fn generator(&self, i: usize, j: usize) -> DMatrix<C64> {
        let mut m = DMatrix::zeros(self.dim, self.dim);
        for l in 0..self.n {
            m[(self.block_index(i, l), self.block_index(j, l))] = C64::new(1.0, 0.0);
        }
        m
    }

    /// Verifies `[O_ij, O_kl] = delta_jk O_il - delta_il O_kj` on all
    /// generator pairs.
    pub fn check_closure(&self, tol: f64) -> Result<()> {
        let n = self.n;
        let gens: Vec<Vec<DMatrix<C64>>> = (0..n)
            .map(|i| (0..n).map(|j| self.generator(i, j)).collect())
            .collect();
        for i in 0..n {
            for j in 0..n {
                for k in 0..n {
                    for l in 0..n {
                        let comm = &gens[i][j] * &gens[k][l] - &gens[k][l] * &gens[i][j];
                        let mut expect = DMatrix::<C64>::zeros(self.dim, self.dim);
                        if j == k {
                            expect += &gens[i][l];
                        }
                        if i == l {
                            expect -= &gens[k][j];
                        }
                        if (comm - expect).norm() > tol {
                            return Err(Error::Algebra(format!(
                                "[O_{i}{j}, O_{k}{l}] deviates from the u({n}) relations"
                            )));
                        }
                    }
                }
            }
        }
        Ok(())
    }
}

/// Result of aligning a u(N) family with a state.
#[derive(Debug, Clone)]
pub struct UnAlignment {
    /// Microstates: cells `0..n` are the aligned Cartan eigenstates `|ii>`,
    /// cell `n` is the remainder orthogonal to the adjoint block.
    pub decomposition: MicrostateDecomposition,
    /// Unitary `V` with `V^dagger M V` diagonal.
    pub unitary: DMatrix<C64>,
    /// Max residual of the Cartan eigenvalue property
    /// `O'_ii |Psi_j> = delta_ij |Psi_j>` after alignment.
    pub cartan_defect: f64,
}

/// Diagonalizes a normal matrix by a unitary similarity: splits into the
/// commuting Hermitian pair `(M + M^dagger)/2`, `(M - M^dagger)/(2i)` and
/// refines eigenspaces of the first by the second.
fn diagonalize_normal(m: &DMatrix<C64>, tol: f64) -> Result<(DVector<C64>, DMatrix<C64>)> {
    let n = m.nrows();
    let scale = m.norm().max(1e-300);
    let comm = m * m.adjoint() - m.adjoint() * m;
    if comm.norm() > tol * scale * scale.max(1.0) {
        return Err(Error::NotNormal(format!(
            "||[M, M^dagger]|| = {:.3e} exceeds tolerance; cannot align by a unitary",
            comm.norm()
        )));
    }
    let h1 = HermitianOperator::symmetrized(m);
    let h2m = (m - m.adjoint()).scale(0.5) * C64::new(0.0, -1.0);
    let h2 = HermitianOperator::new(h2m).expect("anti-Hermitian part over i is Hermitian");
    let e1 = Eigensystem::of(&h1);
    let mut basis = e1.vectors.clone();
    // Refine (near-)degenerate eigenspaces of h1 against h2.
    let gap_tol = 1e-8 * scale + 1e-12;
    let mut start = 0usize;
    while start < n {
        let mut end = start + 1;
        while end < n && (e1.values[end] - e1.values[end - 1]).abs() < gap_tol {
            end += 1;
        }
        if end - start > 1 {
            let sub = basis.columns(start, end - start).into_owned();
            let block = HermitianOperator::new(sub.adjoint() * h2.matrix() * &sub)
                .map_err(|_| Error::NotNormal("eigenspace block of H2 not Hermitian".into()))?;
            let e2 = Eigensystem::of(&block);
            let refined = sub * e2.vectors;
            for (offset, col) in refined.column_iter().enumerate() {
                basis.set_column(start + offset, &col);
            }
        }
        start = end;
    }
    let d = basis.adjoint() * m * &basis;
    let mut offdiag: f64 = 0.0;
    for i in 0..n {
        for j in 0..n {
            if i != j {
                offdiag = offdiag.max(d[(i, j)].norm());
            }
        }
    }
    if offdiag > tol * scale.max(1.0) {
        return Err(Error::NotNormal(format!(
            "residual off-diagonal {offdiag:.3e} after refinement"
        )));
    }
    // Order Cartan slots by descending eigenvalue magnitude so dominant
    // weights come first.
    let diag = d.diagonal();
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| diag[b].norm().partial_cmp(&diag[a].norm()).unwrap());
    let values = nalgebra::DVector::from_iterator(n, order.iter().map(|&k| diag[k]));
    let mut sorted_basis = DMatrix::zeros(n, n);
    for (col, &k) in order.iter().enumerate() {
        sorted_basis.set_column(col, &basis.column(k));
    }
    Ok((values, sorted_basis))
}

/// Aligns the u(N) generator family with a state: a unitary rotation makes
/// the coefficient matrix of the state on the adjoint block diagonal, so the
/// microstates become the Cartan eigenstates `|ii>` plus the remainder.
///
/// The coefficient matrix must be normal; otherwise no unitary similarity can
/// diagonalize it and `NotNormal` is raised.
pub fn align_un(psi: &StateVector, algebra: &UnAlgebra, tol: f64) -> Result<UnAlignment> {
    if psi.dim() != algebra.dim() {
        return Err(Error::Shape(format!(
            "align: state dim {} vs algebra dim {}",
            psi.dim(),
            algebra.dim()
        )));
    }
    algebra.check_closure(1e-12)?;
    let n = algebra.n();
    let m = DMatrix::from_fn(n, n, |k, l| psi.amplitude(algebra.block_index(k, l)));
    let (eigvals, v) = diagonalize_normal(&m, tol)?;

    let dim = algebra.dim();
    let mut amplitudes = vec![C64::new(0.0, 0.0); n + 1];
    let mut vectors: Vec<Option<DVector<C64>>> = vec![None; n + 1];
    for i in 0..n {
        if eigvals[i].norm_sqr() < EPS_OCC {
            continue;
        }
        // |ii>' = sum_kl V_ki conj(V_li) |kl>, scaled by the eigenvalue.
        let mut raw = DVector::zeros(dim);
        for k in 0..n {
            for l in 0..n {
                raw[algebra.block_index(k, l)] = eigvals[i] * v[(k, i)] * v[(l, i)].conj();
            }
        }
        let norm = raw.norm();
        let (c, vec) = phase_fix(&raw, norm);
        amplitudes[i] = c;
        vectors[i] = Some(vec);
    }
    // Remainder: everything outside the adjoint block.
    let mut rest = DVector::zeros(dim);
    for g in n * n..dim {
        rest[g] = psi.amplitude(g);
    }
    let rest_norm_sq: f64 = rest.iter().map(|z| z.norm_sqr()).sum();
    if rest_norm_sq >= EPS_OCC {
        let (c, vec) = phase_fix(&rest, rest_norm_sq.sqrt());
        amplitudes[n] = c;
        vectors[n] = Some(vec);
    }
    let decomposition = MicrostateDecomposition::from_parts(dim, amplitudes, vectors, EPS_OCC)?;

    // Post-hoc Cartan check: O'_ii |Psi_j> = delta_ij |Psi_j> where the
    // aligned generator is O'_ii = R O_ii R^dagger with R the adjoint-block
    // representation of the rotation.
    let mut r = DMatrix::<C64>::identity(dim, dim);
    for k in 0..n {
        for l in 0..n {
            for i in 0..n {
                for j in 0..n {
                    r[(algebra.block_index(k, l), algebra.block_index(i, j))] =
                        v[(k, i)] * v[(l, j)].conj();
                }
            }
        }
    }
    let mut cartan_defect: f64 = 0.0;
    for i in 0..n {
        let aligned = &r * algebra.generator(i, i) * r.adjoint();
        for j in 0..=n {
            if let Some(vj) = decomposition.microstate(j) {
                let expect = if i == j {
                    vj.clone()
                } else {
                    DVector::zeros(dim)
                };
                cartan_defect = cartan_defect.max((&aligned * vj - expect).norm());
            }
        }
    }
    Ok(UnAlignment {
        decomposition,
        unitary: v,
        cartan_defect,
    })
}
