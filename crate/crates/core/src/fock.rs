//! Truncated Fock-space linear optics on pure states and density operators.
//!
//! Every mode holds occupations `0..=cutoff`. Joint states are stored densely,
//! with the first mode label as the most significant axis. Beamsplitters
//! refuse to run when a populated component would need more photons than the
//! cutoff allows; circuits call [`FockState::discard_overflow`] first when they
//! accept the truncation.

use nalgebra::DMatrix;
use num_complex::Complex64;

pub type C64 = Complex64;

const MAX_DIM: usize = 1 << 22;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum FockError {
    #[error("unknown mode `{0}`")]
    UnknownMode(String),
    #[error("mode `{0}` appears more than once")]
    DuplicateMode(String),
    #[error("mixing `{mode_a}` and `{mode_b}` populates {photons} photons but the cutoff is {cutoff}")]
    CutoffOverflow {
        mode_a: String,
        mode_b: String,
        photons: usize,
        cutoff: usize,
    },
    #[error("invalid herald pattern: {0}")]
    InvalidPattern(String),
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),
}

pub type Result<T> = std::result::Result<T, FockError>;

/// Photon-number-resolved record of one detector channel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DetectorOutcome {
    /// No count registered.
    Vacuum,
    /// Exactly one count, from a photon or a dark event.
    Click,
    /// Two or more counts.
    Multi,
}

impl DetectorOutcome {
    pub const ALL: [DetectorOutcome; 3] = [Self::Vacuum, Self::Click, Self::Multi];

    /// Probability of recording this outcome when `photons` photons arrive and a
    /// dark count fires independently with probability `dark_click_prob`.
    pub fn weight(self, photons: usize, dark_click_prob: f64) -> f64 {
        let p = dark_click_prob;
        match (self, photons) {
            (Self::Vacuum, 0) => 1.0 - p,
            (Self::Vacuum, _) => 0.0,
            (Self::Click, 0) => p,
            (Self::Click, 1) => 1.0 - p,
            (Self::Click, _) => 0.0,
            (Self::Multi, 0) => 0.0,
            (Self::Multi, 1) => p,
            (Self::Multi, _) => 1.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Layout {
    labels: Vec<String>,
    cutoff: usize,
    strides: Vec<usize>,
    dim: usize,
}

impl Layout {
    fn new(labels: Vec<String>, cutoff: usize) -> Result<Self> {
        if cutoff == 0 {
            return Err(FockError::InvalidParameter("cutoff must be at least 1".into()));
        }
        for (i, l) in labels.iter().enumerate() {
            if labels[..i].contains(l) {
                return Err(FockError::DuplicateMode(l.clone()));
            }
        }
        let base = cutoff + 1;
        let mut strides = vec![1; labels.len()];
        let mut dim: usize = 1;
        for k in (0..labels.len()).rev() {
            strides[k] = dim;
            dim = dim
                .checked_mul(base)
                .filter(|d| *d <= MAX_DIM)
                .ok_or_else(|| FockError::InvalidParameter("basis too large".into()))?;
        }
        Ok(Self {
            labels,
            cutoff,
            strides,
            dim,
        })
    }

    fn base(&self) -> usize {
        self.cutoff + 1
    }

    fn position(&self, mode: &str) -> Result<usize> {
        self.labels
            .iter()
            .position(|l| l == mode)
            .ok_or_else(|| FockError::UnknownMode(mode.to_string()))
    }

    fn positions(&self, modes: &[&str]) -> Result<Vec<usize>> {
        let mut out = Vec::with_capacity(modes.len());
        for m in modes {
            let p = self.position(m)?;
            if out.contains(&p) {
                return Err(FockError::DuplicateMode(m.to_string()));
            }
            out.push(p);
        }
        Ok(out)
    }

    fn digit(&self, index: usize, pos: usize) -> usize {
        (index / self.strides[pos]) % self.base()
    }

    fn index_of(&self, occupations: &[usize]) -> Result<usize> {
        if occupations.len() != self.labels.len() {
            return Err(FockError::InvalidParameter(format!(
                "expected {} occupations, got {}",
                self.labels.len(),
                occupations.len()
            )));
        }
        let mut idx = 0;
        for (k, &n) in occupations.iter().enumerate() {
            if n > self.cutoff {
                return Err(FockError::InvalidParameter(format!(
                    "occupation {n} exceeds cutoff {}",
                    self.cutoff
                )));
            }
            idx += n * self.strides[k];
        }
        Ok(idx)
    }

    fn without(&self, positions: &[usize]) -> Result<Layout> {
        let labels = self
            .labels
            .iter()
            .enumerate()
            .filter(|(k, _)| !positions.contains(k))
            .map(|(_, l)| l.clone())
            .collect();
        Layout::new(labels, self.cutoff)
    }

    fn select(&self, positions: &[usize]) -> Result<Layout> {
        Layout::new(
            positions.iter().map(|&p| self.labels[p].clone()).collect(),
            self.cutoff,
        )
    }

    /// Index of `index` projected onto `positions` (first listed most significant).
    fn sub_index(&self, index: usize, positions: &[usize]) -> usize {
        positions
            .iter()
            .fold(0, |acc, &p| acc * self.base() + self.digit(index, p))
    }

    /// Bases of every local block (all `positions` empty) and the offsets of
    /// the local basis states within a block.
    fn blocks(&self, positions: &[usize]) -> (Vec<usize>, Vec<usize>) {
        let base = self.base();
        let local = base.pow(positions.len() as u32);
        let offsets = (0..local)
            .map(|j| {
                let mut rem = j;
                let mut off = 0;
                for &p in positions.iter().rev() {
                    off += (rem % base) * self.strides[p];
                    rem /= base;
                }
                off
            })
            .collect();
        let others: Vec<usize> = (0..self.labels.len()).filter(|k| !positions.contains(k)).collect();
        let mut starts = Vec::with_capacity(self.dim / local);
        let mut digits = vec![0; others.len()];
        let mut index = 0;
        loop {
            starts.push(index);
            // odometer over the remaining modes, least significant last
            let mut k = others.len();
            loop {
                if k == 0 {
                    return (starts, offsets);
                }
                k -= 1;
                let stride = self.strides[others[k]];
                if digits[k] < self.cutoff {
                    digits[k] += 1;
                    index += stride;
                    break;
                }
                index -= digits[k] * stride;
                digits[k] = 0;
            }
        }
    }
}

/// Sparse local operator: (row, column, value) over a local basis.
type LocalOp = Vec<(usize, usize, C64)>;

fn apply_local(data: &mut [C64], starts: &[usize], offsets: &[usize], op: &LocalOp) {
    let zero = C64::new(0.0, 0.0);
    let mut scratch = vec![zero; offsets.len()];
    let mut input = vec![zero; offsets.len()];
    for &s in starts {
        let mut empty = true;
        for (j, off) in offsets.iter().enumerate() {
            input[j] = data[s + off];
            empty &= input[j] == zero;
        }
        if empty {
            continue;
        }
        scratch.fill(zero);
        for &(i, j, v) in op {
            scratch[i] += v * input[j];
        }
        for (i, off) in offsets.iter().enumerate() {
            data[s + off] = scratch[i];
        }
    }
}

fn factorial(n: usize) -> f64 {
    (1..=n).map(|k| k as f64).product()
}

fn binomial(n: usize, k: usize) -> f64 {
    factorial(n) / (factorial(k) * factorial(n - k))
}

/// Two-mode beamsplitter on the local basis `n_a * base + n_b`, restricted to
/// inputs with at most `cutoff` photons in total.
///
/// Convention: a† → √t a† + √(1−t) e^{iφ} b†, b† → √(1−t) a† − √t e^{iφ} b†.
fn beamsplitter_op(cutoff: usize, transmissivity: f64, phase: f64) -> LocalOp {
    let base = cutoff + 1;
    let t = transmissivity.sqrt();
    let r = (1.0 - transmissivity).sqrt();
    let e = C64::from_polar(1.0, phase);
    let (u00, u01, u10, u11) = (C64::new(t, 0.0), e * r, C64::new(r, 0.0), -e * t);
    let mut op = LocalOp::new();
    for na in 0..=cutoff {
        for nb in 0..=(cutoff - na) {
            let total = na + nb;
            let mut coef = vec![C64::new(0.0, 0.0); total + 1];
            for k in 0..=na {
                let ca = u00.powu(k as u32) * u01.powu((na - k) as u32) * binomial(na, k);
                for l in 0..=nb {
                    let cb = u10.powu(l as u32) * u11.powu((nb - l) as u32) * binomial(nb, l);
                    coef[k + l] += ca * cb;
                }
            }
            let norm_in = (factorial(na) * factorial(nb)).sqrt();
            for (i, c) in coef.into_iter().enumerate() {
                let j = total - i;
                let v = c * ((factorial(i) * factorial(j)).sqrt() / norm_in);
                if v.norm_sqr() > 0.0 {
                    op.push((i * base + j, na * base + nb, v));
                }
            }
        }
    }
    op
}

/// Kraus operators of a pure-loss channel with the given transmission.
fn loss_kraus(cutoff: usize, efficiency: f64) -> Vec<LocalOp> {
    (0..=cutoff)
        .map(|k| {
            (k..=cutoff)
                .filter_map(|n| {
                    let w = binomial(n, k)
                        * efficiency.powi((n - k) as i32)
                        * (1.0 - efficiency).powi(k as i32);
                    (w > 0.0).then(|| (n - k, n, C64::new(w.sqrt(), 0.0)))
                })
                .collect()
        })
        .collect()
}

fn check_unit(name: &str, value: f64) -> Result<()> {
    if (0.0..=1.0).contains(&value) {
        Ok(())
    } else {
        Err(FockError::InvalidParameter(format!("{name} = {value} outside [0, 1]")))
    }
}

fn check_herald(
    layout: &Layout,
    detectors: &[&str],
    pattern: &[DetectorOutcome],
    dark_click_prob: f64,
) -> Result<Vec<usize>> {
    if detectors.len() != pattern.len() {
        return Err(FockError::InvalidPattern(format!(
            "{} detectors but {} outcomes",
            detectors.len(),
            pattern.len()
        )));
    }
    if detectors.is_empty() {
        return Err(FockError::InvalidPattern("no detector modes".into()));
    }
    if !(0.0..1.0).contains(&dark_click_prob) {
        return Err(FockError::InvalidParameter(format!(
            "dark click probability {dark_click_prob} outside [0, 1)"
        )));
    }
    layout.positions(detectors).map_err(|e| match e {
        FockError::DuplicateMode(m) => FockError::InvalidPattern(format!("detector `{m}` repeated")),
        other => other,
    })
}

/// Every detector photon-number tuple with nonzero weight under `pattern`.
fn herald_tuples(
    cutoff: usize,
    pattern: &[DetectorOutcome],
    dark_click_prob: f64,
) -> Vec<(Vec<usize>, f64)> {
    let base = cutoff + 1;
    let count = base.pow(pattern.len() as u32);
    (0..count)
        .filter_map(|code| {
            let mut rem = code;
            let mut occ = vec![0; pattern.len()];
            for k in (0..pattern.len()).rev() {
                occ[k] = rem % base;
                rem /= base;
            }
            let w: f64 = pattern
                .iter()
                .zip(&occ)
                .map(|(o, &n)| o.weight(n, dark_click_prob))
                .product();
            (w > 0.0).then_some((occ, w))
        })
        .collect()
}

/// Pure state over a set of labelled modes.
#[derive(Debug, Clone, PartialEq)]
pub struct FockState {
    layout: Layout,
    amplitudes: Vec<C64>,
    normalized: bool,
}

impl FockState {
    pub fn vacuum(labels: &[&str], cutoff: usize) -> Result<Self> {
        let layout = Layout::new(labels.iter().map(|s| s.to_string()).collect(), cutoff)?;
        let mut amplitudes = vec![C64::new(0.0, 0.0); layout.dim];
        amplitudes[0] = C64::new(1.0, 0.0);
        Ok(Self {
            layout,
            amplitudes,
            normalized: true,
        })
    }

    /// Superposition of occupation-number states; terms with repeated
    /// occupations add up.
    pub fn from_terms(labels: &[&str], cutoff: usize, terms: &[(&[usize], C64)]) -> Result<Self> {
        let layout = Layout::new(labels.iter().map(|s| s.to_string()).collect(), cutoff)?;
        let mut amplitudes = vec![C64::new(0.0, 0.0); layout.dim];
        for (occ, amp) in terms {
            amplitudes[layout.index_of(occ)?] += *amp;
        }
        let mut state = Self {
            layout,
            amplitudes,
            normalized: false,
        };
        state.normalized = (state.norm_sqr() - 1.0).abs() < 1e-12;
        Ok(state)
    }

    pub fn labels(&self) -> &[String] {
        &self.layout.labels
    }

    pub fn cutoff(&self) -> usize {
        self.layout.cutoff
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn amplitudes(&self) -> &[C64] {
        &self.amplitudes
    }

    pub fn amplitude(&self, occupations: &[usize]) -> Result<C64> {
        Ok(self.amplitudes[self.layout.index_of(occupations)?])
    }

    pub fn norm_sqr(&self) -> f64 {
        self.amplitudes.iter().map(|a| a.norm_sqr()).sum()
    }

    pub fn normalize(&mut self) -> Result<()> {
        let n = self.norm_sqr();
        if n <= 0.0 {
            return Err(FockError::InvalidParameter("cannot normalize the zero vector".into()));
        }
        let s = 1.0 / n.sqrt();
        self.amplitudes.iter_mut().for_each(|a| *a *= s);
        self.normalized = true;
        Ok(())
    }

    /// Photon-number distribution of one mode (unnormalized if the state is).
    pub fn photon_distribution(&self, mode: &str) -> Result<Vec<f64>> {
        let pos = self.layout.position(mode)?;
        let mut dist = vec![0.0; self.layout.base()];
        for (i, a) in self.amplitudes.iter().enumerate() {
            dist[self.layout.digit(i, pos)] += a.norm_sqr();
        }
        Ok(dist)
    }

    pub fn mean_photons(&self, mode: &str) -> Result<f64> {
        let dist = self.photon_distribution(mode)?;
        Ok(dist.iter().enumerate().map(|(n, p)| n as f64 * p).sum())
    }

    pub fn tensor(&self, other: &FockState) -> Result<FockState> {
        if self.layout.cutoff != other.layout.cutoff {
            return Err(FockError::InvalidParameter("tensor of states with different cutoffs".into()));
        }
        let labels = self.layout.labels.iter().chain(&other.layout.labels).cloned().collect();
        let layout = Layout::new(labels, self.layout.cutoff)?;
        let mut amplitudes = Vec::with_capacity(layout.dim);
        for a in &self.amplitudes {
            amplitudes.extend(other.amplitudes.iter().map(|b| a * b));
        }
        Ok(FockState {
            layout,
            amplitudes,
            normalized: self.normalized && other.normalized,
        })
    }

    /// Appends vacuum modes.
    pub fn with_vacuum(&self, labels: &[&str]) -> Result<FockState> {
        self.tensor(&FockState::vacuum(labels, self.layout.cutoff)?)
    }

    fn overflow_check(&self, pa: usize, pb: usize) -> Result<()> {
        let cutoff = self.layout.cutoff;
        for (i, a) in self.amplitudes.iter().enumerate() {
            let n = self.layout.digit(i, pa) + self.layout.digit(i, pb);
            if n > cutoff && a.norm_sqr() > 0.0 {
                return Err(FockError::CutoffOverflow {
                    mode_a: self.layout.labels[pa].clone(),
                    mode_b: self.layout.labels[pb].clone(),
                    photons: n,
                    cutoff,
                });
            }
        }
        Ok(())
    }

    /// Removes components whose combined occupation of the two modes exceeds
    /// the cutoff, returning the discarded squared norm.
    pub fn discard_overflow(&mut self, mode_a: &str, mode_b: &str) -> Result<f64> {
        let pa = self.layout.position(mode_a)?;
        let pb = self.layout.position(mode_b)?;
        let mut removed = 0.0;
        for (i, a) in self.amplitudes.iter_mut().enumerate() {
            if self.layout.digit(i, pa) + self.layout.digit(i, pb) > self.layout.cutoff {
                removed += a.norm_sqr();
                *a = C64::new(0.0, 0.0);
            }
        }
        if removed > 0.0 {
            self.normalized = false;
        }
        Ok(removed)
    }

    pub fn apply_beamsplitter(
        &self,
        mode_a: &str,
        mode_b: &str,
        transmissivity: f64,
        relative_phase: f64,
    ) -> Result<FockState> {
        check_unit("transmissivity", transmissivity)?;
        let pa = self.layout.position(mode_a)?;
        let pb = self.layout.position(mode_b)?;
        if pa == pb {
            return Err(FockError::DuplicateMode(mode_a.to_string()));
        }
        self.overflow_check(pa, pb)?;
        let op = beamsplitter_op(self.layout.cutoff, transmissivity, relative_phase);
        let (starts, offsets) = self.layout.blocks(&[pa, pb]);
        let mut out = self.clone();
        apply_local(&mut out.amplitudes, &starts, &offsets, &op);
        Ok(out)
    }

    /// Pure-loss channel realised as a beamsplitter into a fresh ancilla that is
    /// then traced out.
    pub fn apply_loss(&self, mode: &str, efficiency: f64) -> Result<DensityOp> {
        check_unit("efficiency", efficiency)?;
        self.layout.position(mode)?;
        let mut ancilla = format!("{mode}#loss");
        while self.layout.labels.contains(&ancilla) {
            ancilla.push('#');
        }
        let dilated = self
            .with_vacuum(&[&ancilla])?
            .apply_beamsplitter(mode, &ancilla, efficiency, 0.0)?;
        let keep: Vec<&str> = self.layout.labels.iter().map(String::as_str).collect();
        dilated.reduced_density(&keep)
    }

    /// Fixes the listed modes to the given occupations and drops them.
    pub fn project(&self, fixed: &[(&str, usize)]) -> Result<FockState> {
        let modes: Vec<&str> = fixed.iter().map(|(m, _)| *m).collect();
        let positions = self.layout.positions(&modes)?;
        for (_, n) in fixed {
            if *n > self.layout.cutoff {
                return Err(FockError::InvalidParameter(format!("occupation {n} above cutoff")));
            }
        }
        let layout = self.layout.without(&positions)?;
        let amplitudes = self
            .amplitudes
            .iter()
            .enumerate()
            .filter(|(i, _)| {
                positions
                    .iter()
                    .zip(fixed)
                    .all(|(&p, (_, n))| self.layout.digit(*i, p) == *n)
            })
            .map(|(_, a)| *a)
            .collect();
        Ok(FockState {
            layout,
            amplitudes,
            normalized: false,
        })
    }

    /// Density operator of the listed modes (in the given order), tracing out
    /// everything else.
    pub fn reduced_density(&self, keep: &[&str]) -> Result<DensityOp> {
        let keep_pos = self.layout.positions(keep)?;
        let env_pos: Vec<usize> = (0..self.layout.labels.len())
            .filter(|p| !keep_pos.contains(p))
            .collect();
        let keep_layout = self.layout.select(&keep_pos)?;
        let env_dim = self.layout.base().pow(env_pos.len() as u32);
        let mut m = DMatrix::<C64>::zeros(keep_layout.dim, env_dim);
        for (i, a) in self.amplitudes.iter().enumerate() {
            if a.norm_sqr() > 0.0 {
                m[(
                    self.layout.sub_index(i, &keep_pos),
                    self.layout.sub_index(i, &env_pos),
                )] = *a;
            }
        }
        let matrix = &m * m.adjoint();
        Ok(DensityOp {
            layout: keep_layout,
            matrix,
        })
    }

    pub fn to_density(&self) -> DensityOp {
        let v = DMatrix::from_column_slice(self.layout.dim, 1, &self.amplitudes);
        DensityOp {
            layout: self.layout.clone(),
            matrix: &v * v.adjoint(),
        }
    }

    /// Heralds on a detector pattern and returns the unnormalized conditional
    /// state of `keep` together with the herald probability. Modes that are
    /// neither detectors nor kept are traced out.
    pub fn herald_click(
        &self,
        detectors: &[&str],
        pattern: &[DetectorOutcome],
        dark_click_prob: f64,
        keep: &[&str],
    ) -> Result<(DensityOp, f64)> {
        check_herald(&self.layout, detectors, pattern, dark_click_prob)?;
        if let Some(k) = keep.iter().find(|k| detectors.contains(k)) {
            return Err(FockError::InvalidPattern(format!("`{k}` is both detector and kept")));
        }
        let mut acc: Option<DensityOp> = None;
        for (occ, w) in herald_tuples(self.layout.cutoff, pattern, dark_click_prob) {
            let fixed: Vec<(&str, usize)> = detectors.iter().copied().zip(occ).collect();
            let mut part = self.project(&fixed)?.reduced_density(keep)?;
            part.matrix *= C64::new(w, 0.0);
            match acc.as_mut() {
                Some(a) => a.matrix += part.matrix,
                None => acc = Some(part),
            }
        }
        let rho = match acc {
            Some(r) => r,
            None => {
                let pos = self.layout.positions(keep)?;
                let layout = self.layout.select(&pos)?;
                DensityOp {
                    matrix: DMatrix::zeros(layout.dim, layout.dim),
                    layout,
                }
            }
        };
        let p = rho.trace();
        Ok((rho, p))
    }
}

/// Possibly unnormalized density operator over labelled modes.
#[derive(Debug, Clone, PartialEq)]
pub struct DensityOp {
    layout: Layout,
    matrix: DMatrix<C64>,
}

impl DensityOp {
    pub fn new(labels: &[&str], cutoff: usize, matrix: DMatrix<C64>) -> Result<Self> {
        let layout = Layout::new(labels.iter().map(|s| s.to_string()).collect(), cutoff)?;
        if matrix.nrows() != layout.dim || matrix.ncols() != layout.dim {
            return Err(FockError::InvalidParameter(format!(
                "matrix is {}x{}, basis has dimension {}",
                matrix.nrows(),
                matrix.ncols(),
                layout.dim
            )));
        }
        Ok(Self { layout, matrix })
    }

    pub fn from_pure(state: &FockState) -> Self {
        state.to_density()
    }

    pub fn labels(&self) -> &[String] {
        &self.layout.labels
    }

    pub fn cutoff(&self) -> usize {
        self.layout.cutoff
    }

    pub fn matrix(&self) -> &DMatrix<C64> {
        &self.matrix
    }

    pub fn dim(&self) -> usize {
        self.layout.dim
    }

    pub fn trace(&self) -> f64 {
        self.matrix.trace().re
    }

    pub fn scaled(&self, factor: f64) -> DensityOp {
        DensityOp {
            layout: self.layout.clone(),
            matrix: &self.matrix * C64::new(factor, 0.0),
        }
    }

    pub fn normalized(&self) -> Result<DensityOp> {
        let t = self.trace();
        if t <= 0.0 {
            return Err(FockError::InvalidParameter("zero-trace operator".into()));
        }
        Ok(self.scaled(1.0 / t))
    }

    /// Sum of two operators on the same modes.
    pub fn plus(&self, other: &DensityOp) -> Result<DensityOp> {
        if self.layout != other.layout {
            return Err(FockError::InvalidParameter("operators live on different modes".into()));
        }
        Ok(DensityOp {
            layout: self.layout.clone(),
            matrix: &self.matrix + &other.matrix,
        })
    }

    pub fn element(&self, row: &[usize], col: &[usize]) -> Result<C64> {
        Ok(self.matrix[(self.layout.index_of(row)?, self.layout.index_of(col)?)])
    }

    pub fn population(&self, occupations: &[usize]) -> Result<f64> {
        Ok(self.element(occupations, occupations)?.re)
    }

    pub fn hermiticity_error(&self) -> f64 {
        let n = self.layout.dim;
        let mut worst: f64 = 0.0;
        for i in 0..n {
            for j in i..n {
                worst = worst.max((self.matrix[(i, j)] - self.matrix[(j, i)].conj()).norm());
            }
        }
        worst
    }

    pub fn min_eigenvalue(&self) -> f64 {
        let h = (&self.matrix + self.matrix.adjoint()) * C64::new(0.5, 0.0);
        h.symmetric_eigenvalues().iter().copied().fold(f64::INFINITY, f64::min)
    }

    fn apply_both_sides(&mut self, positions: &[usize], ops: &[LocalOp]) {
        let (starts, offsets) = self.layout.blocks(positions);
        let n = self.layout.dim;
        let zero = C64::new(0.0, 0.0);
        let live: Vec<usize> = (0..n).filter(|&c| self.matrix.column(c).iter().any(|v| *v != zero)).collect();
        let mut total: Option<DMatrix<C64>> = None;
        let mut mixed = vec![zero; offsets.len() * n];
        for op in ops {
            let mut m = self.matrix.clone();
            for &c in &live {
                apply_local(m.column_mut(c).as_mut_slice(), &starts, &offsets, op);
            }
            // right multiplication by K† mixes whole columns within each block
            let data = m.as_mut_slice();
            for &s in &starts {
                mixed.fill(zero);
                for &(i, j, v) in op {
                    let src = (s + offsets[j]) * n;
                    let v = v.conj();
                    for (dst, x) in mixed[i * n..(i + 1) * n].iter_mut().zip(&data[src..src + n]) {
                        *dst += v * x;
                    }
                }
                for (i, off) in offsets.iter().enumerate() {
                    let dst = (s + off) * n;
                    data[dst..dst + n].copy_from_slice(&mixed[i * n..(i + 1) * n]);
                }
            }
            match total.as_mut() {
                Some(t) => *t += m,
                None => total = Some(m),
            }
        }
        if let Some(t) = total {
            self.matrix = t;
        }
    }

    fn overflow_check(&self, pa: usize, pb: usize) -> Result<()> {
        let cutoff = self.layout.cutoff;
        let n = self.layout.dim;
        for i in 0..n {
            let photons = self.layout.digit(i, pa) + self.layout.digit(i, pb);
            if photons > cutoff && (0..n).any(|j| self.matrix[(i, j)].norm_sqr() > 0.0 || self.matrix[(j, i)].norm_sqr() > 0.0) {
                return Err(FockError::CutoffOverflow {
                    mode_a: self.layout.labels[pa].clone(),
                    mode_b: self.layout.labels[pb].clone(),
                    photons,
                    cutoff,
                });
            }
        }
        Ok(())
    }

    /// Zeroes every row and column whose combined occupation of the two modes
    /// exceeds the cutoff, returning the discarded trace.
    pub fn discard_overflow(&mut self, mode_a: &str, mode_b: &str) -> Result<f64> {
        let pa = self.layout.position(mode_a)?;
        let pb = self.layout.position(mode_b)?;
        let n = self.layout.dim;
        let mut removed = 0.0;
        for i in 0..n {
            if self.layout.digit(i, pa) + self.layout.digit(i, pb) > self.layout.cutoff {
                removed += self.matrix[(i, i)].re;
                self.matrix.row_mut(i).fill(C64::new(0.0, 0.0));
                self.matrix.column_mut(i).fill(C64::new(0.0, 0.0));
            }
        }
        Ok(removed)
    }

    pub fn apply_beamsplitter(
        &self,
        mode_a: &str,
        mode_b: &str,
        transmissivity: f64,
        relative_phase: f64,
    ) -> Result<DensityOp> {
        check_unit("transmissivity", transmissivity)?;
        let pa = self.layout.position(mode_a)?;
        let pb = self.layout.position(mode_b)?;
        if pa == pb {
            return Err(FockError::DuplicateMode(mode_a.to_string()));
        }
        self.overflow_check(pa, pb)?;
        let op = beamsplitter_op(self.layout.cutoff, transmissivity, relative_phase);
        let mut out = self.clone();
        out.apply_both_sides(&[pa, pb], &[op]);
        Ok(out)
    }

    /// Pure-loss channel via its Kraus decomposition.
    pub fn apply_loss(&self, mode: &str, efficiency: f64) -> Result<DensityOp> {
        check_unit("efficiency", efficiency)?;
        let p = self.layout.position(mode)?;
        let kraus = loss_kraus(self.layout.cutoff, efficiency);
        let mut out = self.clone();
        out.apply_both_sides(&[p], &kraus);
        Ok(out)
    }

    /// Multiplies the operator by (−1)^n on both sides for the given mode.
    pub fn parity_flipped(&self, mode: &str) -> Result<DensityOp> {
        let p = self.layout.position(mode)?;
        let mut out = self.clone();
        let n = self.layout.dim;
        for i in 0..n {
            for j in 0..n {
                if (self.layout.digit(i, p) + self.layout.digit(j, p)) % 2 == 1 {
                    out.matrix[(i, j)] = -out.matrix[(i, j)];
                }
            }
        }
        Ok(out)
    }

    /// Sums weighted diagonal blocks over the occupations of `positions`.
    fn block_sum(&self, positions: &[usize], tuples: &[(Vec<usize>, f64)]) -> Result<DensityOp> {
        let layout = self.layout.without(positions)?;
        let mut matrix = DMatrix::<C64>::zeros(layout.dim, layout.dim);
        for (occ, w) in tuples {
            let idx: Vec<usize> = (0..self.layout.dim)
                .filter(|&i| positions.iter().zip(occ).all(|(&p, &n)| self.layout.digit(i, p) == n))
                .collect();
            let w = C64::new(*w, 0.0);
            for (c, &jc) in idx.iter().enumerate() {
                for (r, &ir) in idx.iter().enumerate() {
                    matrix[(r, c)] += w * self.matrix[(ir, jc)];
                }
            }
        }
        Ok(DensityOp { layout, matrix })
    }

    /// Projects the detector modes onto the outcome pattern (dark counts mixed
    /// in classically), traces them out and returns the unnormalized
    /// conditional operator and the herald probability.
    pub fn herald_click(
        &self,
        detectors: &[&str],
        pattern: &[DetectorOutcome],
        dark_click_prob: f64,
    ) -> Result<(DensityOp, f64)> {
        let positions = check_herald(&self.layout, detectors, pattern, dark_click_prob)?;
        let tuples = herald_tuples(self.layout.cutoff, pattern, dark_click_prob);
        let rho = self.block_sum(&positions, &tuples)?;
        let p = rho.trace();
        Ok((rho, p))
    }

    pub fn partial_trace(&self, modes: &[&str]) -> Result<DensityOp> {
        let positions = self.layout.positions(modes)?;
        if positions.is_empty() {
            return Ok(self.clone());
        }
        let base = self.layout.base();
        let tuples: Vec<(Vec<usize>, f64)> = (0..base.pow(positions.len() as u32))
            .map(|code| {
                let mut rem = code;
                let mut occ = vec![0; positions.len()];
                for k in (0..positions.len()).rev() {
                    occ[k] = rem % base;
                    rem /= base;
                }
                (occ, 1.0)
            })
            .collect();
        self.block_sum(&positions, &tuples)
    }

    pub fn tensor(&self, other: &DensityOp) -> Result<DensityOp> {
        if self.layout.cutoff != other.layout.cutoff {
            return Err(FockError::InvalidParameter("tensor of operators with different cutoffs".into()));
        }
        let labels = self.layout.labels.iter().chain(&other.layout.labels).cloned().collect();
        let layout = Layout::new(labels, self.layout.cutoff)?;
        Ok(DensityOp {
            layout,
            matrix: self.matrix.kronecker(&other.matrix),
        })
    }

    pub fn relabel(&self, from: &str, to: &str) -> Result<DensityOp> {
        let p = self.layout.position(from)?;
        let mut labels = self.layout.labels.clone();
        labels[p] = to.to_string();
        Ok(DensityOp {
            layout: Layout::new(labels, self.layout.cutoff)?,
            matrix: self.matrix.clone(),
        })
    }

    /// Reorders the modes; `order` must list every mode exactly once.
    pub fn permuted(&self, order: &[&str]) -> Result<DensityOp> {
        if order.len() != self.layout.labels.len() {
            return Err(FockError::InvalidParameter("permutation must name every mode".into()));
        }
        let positions = self.layout.positions(order)?;
        let layout = self.layout.select(&positions)?;
        let map: Vec<usize> = (0..self.layout.dim)
            .map(|i| self.layout.sub_index(i, &positions))
            .collect();
        let mut matrix = DMatrix::<C64>::zeros(layout.dim, layout.dim);
        for j in 0..self.layout.dim {
            for i in 0..self.layout.dim {
                matrix[(map[i], map[j])] = self.matrix[(i, j)];
            }
        }
        Ok(DensityOp { layout, matrix })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(re: f64) -> C64 {
        C64::new(re, 0.0)
    }

    #[test]
    fn single_photon_splits_evenly() {
        let s = FockState::from_terms(&["a", "b"], 2, &[(&[1, 0], c(1.0))]).unwrap();
        let out = s.apply_beamsplitter("a", "b", 0.5, 0.0).unwrap();
        assert!((out.amplitude(&[1, 0]).unwrap().norm_sqr() - 0.5).abs() < 1e-15);
        assert!((out.amplitude(&[0, 1]).unwrap().norm_sqr() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn hong_ou_mandel() {
        let s = FockState::from_terms(&["a", "b"], 2, &[(&[1, 1], c(1.0))]).unwrap();
        let out = s.apply_beamsplitter("a", "b", 0.5, 0.3).unwrap();
        assert!(out.amplitude(&[1, 1]).unwrap().norm() < 1e-15);
        assert!((out.norm_sqr() - 1.0).abs() < 1e-14);
    }

    #[test]
    fn full_transmission_is_identity_up_to_phase() {
        let s = FockState::from_terms(
            &["a", "b"],
            2,
            &[(&[1, 0], c(0.6)), (&[0, 1], C64::new(0.0, 0.8))],
        )
        .unwrap();
        let out = s.apply_beamsplitter("a", "b", 1.0, 0.0).unwrap();
        assert!((out.amplitude(&[1, 0]).unwrap() - c(0.6)).norm() < 1e-15);
        assert!((out.amplitude(&[0, 1]).unwrap() + C64::new(0.0, 0.8)).norm() < 1e-15);
    }

    #[test]
    fn overflow_is_reported() {
        let s = FockState::from_terms(&["a", "b"], 2, &[(&[2, 1], c(1.0))]).unwrap();
        assert!(matches!(
            s.apply_beamsplitter("a", "b", 0.5, 0.0),
            Err(FockError::CutoffOverflow { photons: 3, .. })
        ));
        let mut t = s.clone();
        assert!((t.discard_overflow("a", "b").unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn unknown_mode() {
        let s = FockState::vacuum(&["a"], 2).unwrap();
        assert_eq!(s.apply_loss("z", 0.5).unwrap_err(), FockError::UnknownMode("z".into()));
    }

    #[test]
    fn loss_of_two_photons_is_binomial() {
        let eta = 0.37;
        let s = FockState::from_terms(&["a"], 2, &[(&[2], c(1.0))]).unwrap();
        let rho = s.apply_loss("a", eta).unwrap();
        assert!((rho.population(&[2]).unwrap() - eta * eta).abs() < 1e-15);
        assert!((rho.population(&[1]).unwrap() - 2.0 * eta * (1.0 - eta)).abs() < 1e-15);
        assert!((rho.population(&[0]).unwrap() - (1.0 - eta).powi(2)).abs() < 1e-15);
        let kraus = s.to_density().apply_loss("a", eta).unwrap();
        assert!((&kraus.matrix - &rho.matrix).norm() < 1e-14);
    }

    #[test]
    fn dark_click_on_vacuum() {
        let p = 0.01;
        let rho = FockState::from_terms(&["s", "d1", "d2"], 2, &[(&[1, 0, 0], c(1.0))])
            .unwrap()
            .to_density();
        let (cond, prob) = rho
            .herald_click(&["d1", "d2"], &[DetectorOutcome::Click, DetectorOutcome::Vacuum], p)
            .unwrap();
        assert!((prob - p * (1.0 - p)).abs() < 1e-16);
        assert!((cond.normalized().unwrap().population(&[1]).unwrap() - 1.0).abs() < 1e-15);
    }

    #[test]
    fn herald_split_photon() {
        let s = FockState::from_terms(&["a", "b"], 2, &[(&[1, 0], c(1.0))])
            .unwrap()
            .apply_beamsplitter("a", "b", 0.5, 0.0)
            .unwrap()
            .with_vacuum(&["sys"])
            .unwrap();
        let pattern = [DetectorOutcome::Click, DetectorOutcome::Vacuum];
        let (cond, p) = s.herald_click(&["a", "b"], &pattern, 0.0, &["sys"]).unwrap();
        assert!((p - 0.5).abs() < 1e-15);
        assert!((cond.population(&[0]).unwrap() - 0.5).abs() < 1e-15);
        let (cond2, p2) = s.to_density().herald_click(&["a", "b"], &pattern, 0.0).unwrap();
        assert!((p2 - p).abs() < 1e-15);
        assert!((&cond2.matrix - &cond.matrix).norm() < 1e-15);
    }

    #[test]
    fn invalid_patterns() {
        let rho = FockState::vacuum(&["a", "b"], 2).unwrap().to_density();
        assert!(matches!(
            rho.herald_click(&["a"], &[DetectorOutcome::Click, DetectorOutcome::Vacuum], 0.0),
            Err(FockError::InvalidPattern(_))
        ));
        assert!(matches!(
            rho.herald_click(&["a", "a"], &[DetectorOutcome::Click, DetectorOutcome::Vacuum], 0.0),
            Err(FockError::InvalidPattern(_))
        ));
    }

    #[test]
    fn partial_traces() {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        let s = FockState::from_terms(&["a", "b"], 2, &[(&[1, 0], c(h)), (&[0, 1], c(h))]).unwrap();
        let rho = s.to_density();
        assert_eq!(rho.partial_trace(&[]).unwrap(), rho);
        let all = rho.partial_trace(&["a", "b"]).unwrap();
        assert_eq!(all.dim(), 1);
        assert!((all.trace() - 1.0).abs() < 1e-15);
        let half = rho.partial_trace(&["b"]).unwrap();
        assert!((half.population(&[0]).unwrap() - 0.5).abs() < 1e-15);
        assert!((half.population(&[1]).unwrap() - 0.5).abs() < 1e-15);
        assert!(half.element(&[0], &[1]).unwrap().norm() < 1e-15);
        let via_pure = s.reduced_density(&["a"]).unwrap();
        assert!((&via_pure.matrix - &half.matrix).norm() < 1e-15);
    }

    #[test]
    fn permutation_round_trip() {
        let s = FockState::from_terms(&["a", "b", "c"], 2, &[(&[1, 0, 2], c(0.6)), (&[0, 1, 0], c(0.8))])
            .unwrap();
        let rho = s.to_density();
        let p = rho.permuted(&["c", "a", "b"]).unwrap();
        assert!((p.population(&[2, 1, 0]).unwrap() - 0.36).abs() < 1e-15);
        let back = p.permuted(&["a", "b", "c"]).unwrap();
        assert!((&back.matrix - &rho.matrix).norm() < 1e-15);
    }
}
