//! Entanglement swapping, purification and the final ion–ion state.

use nalgebra::{DMatrix, Matrix4};

use crate::error::{Error, Result};
use crate::fock::DensityOp;
use crate::links::{HeraldedLink, Sign};

/// Chain layout between the two edge nodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SwapTopology {
    /// One backbone link; the second swap joins it to the far edge node.
    WithoutRepeater,
    /// Two backbone links joined by a swap at a central repeater.
    WithRepeater,
}

impl SwapTopology {
    pub fn from_x(x: u32) -> Result<Self> {
        match x {
            1 => Ok(Self::WithoutRepeater),
            3 => Ok(Self::WithRepeater),
            _ => Err(Error::InvalidParameter(format!("X must be 1 or 3, got {x}"))),
        }
    }

    /// The X parameter of the swap formulas.
    pub fn x(self) -> f64 {
        match self {
            Self::WithoutRepeater => 1.0,
            Self::WithRepeater => 3.0,
        }
    }

    /// Number of fiber segments between the edge nodes.
    pub fn n_segments(self) -> usize {
        match self {
            Self::WithoutRepeater => 2,
            Self::WithRepeater => 4,
        }
    }

    pub fn backbone_links(self) -> usize {
        self.n_segments() / 2
    }
}

/// Two-ion state with populations D[k][l] of |k,l⟩ and coherence ±α between
/// |0,1⟩ and |1,0⟩.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IonIonState {
    pub d: [[f64; 2]; 2],
    pub alpha: f64,
    pub sign: Sign,
}

impl IonIonState {
    pub fn new(d: [[f64; 2]; 2], alpha: f64, sign: Sign) -> Result<Self> {
        let s = Self { d, alpha, sign };
        s.validate()?;
        Ok(s)
    }

    pub fn bell(sign: Sign) -> Self {
        Self {
            d: [[0.0, 0.5], [0.5, 0.0]],
            alpha: 0.5,
            sign,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let total: f64 = self.d.iter().flatten().sum();
        if (total - 1.0).abs() > 1e-10 {
            return Err(Error::InvalidParameter(format!("populations sum to {total}")));
        }
        if self.d.iter().flatten().any(|x| *x < -1e-12) || self.alpha < 0.0 {
            return Err(Error::InvalidParameter("negative weight".into()));
        }
        if self.alpha > (self.d[0][1] * self.d[1][0]).max(0.0).sqrt() + 1e-12 {
            return Err(Error::InvalidParameter("coherence exceeds positivity bound".into()));
        }
        Ok(())
    }

    /// Reads populations and the |0,1⟩⟨1,0| coherence from a two-mode operator.
    pub fn from_density(rho: &DensityOp) -> Result<Self> {
        if rho.labels().len() != 2 {
            return Err(Error::InvalidParameter("ion–ion state needs two modes".into()));
        }
        let rho = rho.normalized()?;
        let mut d = [[0.0; 2]; 2];
        for (k, row) in d.iter_mut().enumerate() {
            for (l, v) in row.iter_mut().enumerate() {
                *v = rho.population(&[k, l])?.max(0.0);
            }
        }
        let total: f64 = d.iter().flatten().sum();
        if total <= 0.0 {
            return Err(Error::ZeroProbability("no weight in the ion qubit subspace".into()));
        }
        // ion modes never hold more than one excitation; renormalize defensively
        d.iter_mut().flatten().for_each(|v| *v /= total);
        let coh = rho.element(&[0, 1], &[1, 0])? / total;
        let alpha = coh.norm().min((d[0][1] * d[1][0]).sqrt());
        Ok(Self {
            d,
            alpha,
            sign: Sign::of(coh.re),
        })
    }

    /// 4×4 matrix in the basis |0,0⟩, |0,1⟩, |1,0⟩, |1,1⟩.
    pub fn to_matrix(&self) -> Matrix4<f64> {
        let mut m = Matrix4::zeros();
        m[(0, 0)] = self.d[0][0];
        m[(1, 1)] = self.d[0][1];
        m[(2, 2)] = self.d[1][0];
        m[(3, 3)] = self.d[1][1];
        m[(1, 2)] = self.sign.value() * self.alpha;
        m[(2, 1)] = self.sign.value() * self.alpha;
        m
    }

    fn from_matrix(m: &Matrix4<f64>) -> Result<Self> {
        let t = m.trace();
        if t <= 0.0 {
            return Err(Error::ZeroProbability("empty two-ion state".into()));
        }
        let d = [[m[(0, 0)] / t, m[(1, 1)] / t], [m[(2, 2)] / t, m[(3, 3)] / t]];
        let coh = m[(1, 2)] / t;
        Ok(Self {
            d,
            alpha: coh.abs().min((d[0][1] * d[1][0]).sqrt()),
            sign: Sign::of(coh),
        })
    }
}

/// Overlap with the Bell state matching the recorded sign.
pub fn fidelity(s: &IonIonState) -> f64 {
    0.5 * (s.d[0][1] + s.d[1][0]) + s.alpha
}

/// One round of CNOT purification on two copies, keeping the first pair when
/// both target ions are found in |1⟩.
pub fn purify(s1: &IonIonState, s2: &IonIonState) -> Result<(IonIonState, f64)> {
    let mut d = [[0.0; 2]; 2];
    for k in 0..2 {
        for l in 0..2 {
            d[k][l] = s1.d[k][l] * s2.d[1 - k][1 - l];
        }
    }
    let p: f64 = d.iter().flatten().sum();
    if p <= 0.0 {
        return Err(Error::ZeroProbability("purification never succeeds".into()));
    }
    d.iter_mut().flatten().for_each(|v| *v /= p);
    Ok((
        IonIonState {
            d,
            alpha: s1.alpha * s2.alpha / p,
            sign: s1.sign * s2.sign,
        },
        p,
    ))
}

/// Deterministic Bell measurement on the inner ions of two pairs with the
/// Pauli correction applied to the last ion, averaged over outcomes.
pub fn ion_swap(s1: &IonIonState, s2: &IonIonState) -> Result<IonIonState> {
    let bell = |k: usize| -> [f64; 4] {
        let h = std::f64::consts::FRAC_1_SQRT_2;
        match k {
            0 => [h, 0.0, 0.0, h],
            1 => [h, 0.0, 0.0, -h],
            2 => [0.0, h, h, 0.0],
            _ => [0.0, h, -h, 0.0],
        }
    };
    let project = |rho: &DMatrix<f64>, b: &[f64; 4]| -> Matrix4<f64> {
        let mut out = Matrix4::zeros();
        for a in 0..2 {
            for d in 0..2 {
                for a2 in 0..2 {
                    for d2 in 0..2 {
                        let mut v = 0.0;
                        for bc in 0..4 {
                            for bc2 in 0..4 {
                                let w = b[bc] * b[bc2];
                                if w != 0.0 {
                                    let i = a * 8 + bc * 2 + d;
                                    let j = a2 * 8 + bc2 * 2 + d2;
                                    v += w * rho[(i, j)];
                                }
                            }
                        }
                        out[(a * 2 + d, a2 * 2 + d2)] = v;
                    }
                }
            }
        }
        out
    };
    // Pauli corrections on the last ion: I, X, Z, XZ
    let paulis: [Matrix4<f64>; 4] = {
        let x = Matrix4::new(
            0.0, 1.0, 0.0, 0.0, 1.0, 0.0, 0.0, 0.0, 0.0, 0.0, 0.0, 1.0, 0.0, 0.0, 1.0, 0.0,
        );
        let z = Matrix4::from_diagonal(&nalgebra::Vector4::new(1.0, -1.0, 1.0, -1.0));
        [Matrix4::identity(), x, z, x * z]
    };
    let joint = |a: &IonIonState, b: &IonIonState| -> DMatrix<f64> {
        let ma = DMatrix::from_iterator(4, 4, a.to_matrix().iter().copied());
        let mb = DMatrix::from_iterator(4, 4, b.to_matrix().iter().copied());
        ma.kronecker(&mb)
    };
    let ideal = joint(&IonIonState::bell(Sign::Plus), &IonIonState::bell(Sign::Plus));
    let rho = joint(s1, s2);
    let target = IonIonState::bell(Sign::Plus).to_matrix();
    let mut out = Matrix4::zeros();
    for k in 0..4 {
        let b = bell(k);
        let reference = project(&ideal, &b);
        let best = paulis
            .iter()
            .max_by(|p, q| {
                let fp = (target * *p * reference * p.transpose()).trace();
                let fq = (target * *q * reference * q.transpose()).trace();
                fp.total_cmp(&fq)
            })
            .expect("four corrections");
        out += best * project(&rho, &b) * best.transpose();
    }
    IonIonState::from_matrix(&out)
}

/// Leading-order success probability of a swap between an edge-node memory
/// and a backbone memory.
pub fn swap1_probability(theta: f64, eta_m: f64) -> f64 {
    let t = theta.tan().powi(2);
    eta_m / 2.0 + eta_m * (1.0 - eta_m) * t / (eta_m + t)
}

/// Leading-order success probability of the second swap.
pub fn swap2_probability(theta: f64, eta_m: f64, topo: SwapTopology) -> f64 {
    let x = topo.x();
    let (s, c) = theta.sin_cos();
    let (s2, c2) = (s * s, c * c);
    let loss = 1.0 - eta_m;
    ((3.0 + x) * loss * s2 + 2.0 * eta_m * c2) / (eta_m + 3.0 * loss * s2) * (eta_m * s2 / (eta_m + x * loss * s2))
}

/// Leading-order coherence of the final state per heralding detector,
/// unnormalized by the second swap probability.
pub fn offdiag_leading(theta: f64, eta_m: f64, topo: SwapTopology) -> f64 {
    let x = topo.x();
    let (s, c) = theta.sin_cos();
    let s2 = s * s;
    let loss = 1.0 - eta_m;
    0.5 * c * c * s2 * eta_m / (eta_m + 3.0 * loss * s2) * eta_m / (eta_m + x * loss * s2)
}

/// Leading-order coherence α of the normalized final state.
pub fn offdiag_normalized(theta: f64, eta_m: f64, topo: SwapTopology) -> f64 {
    let p = swap2_probability(theta, eta_m, topo);
    if p <= 0.0 {
        return 0.0;
    }
    2.0 * offdiag_leading(theta, eta_m, topo) / p
}

/// Swap success probabilities times final coherence, the quantity balanced by
/// the choice of mixing angle.
pub fn swap_objective(theta: f64, eta_m: f64, topo: SwapTopology) -> f64 {
    swap1_probability(theta, eta_m) * swap2_probability(theta, eta_m, topo) * offdiag_normalized(theta, eta_m, topo)
}

/// tan²θ maximizing [`swap_objective`], found numerically.
pub fn optimal_tan_sq(eta_m: f64, topo: SwapTopology) -> f64 {
    let f = |u: f64| swap_objective(u.exp().sqrt().atan(), eta_m, topo);
    let (mut lo, mut hi) = (-12.0f64, 12.0f64);
    let steps = 240;
    let h = (hi - lo) / steps as f64;
    let best = (0..=steps)
        .map(|i| lo + h * i as f64)
        .max_by(|a, b| f(*a).total_cmp(&f(*b)))
        .expect("grid is nonempty");
    lo = best - h;
    hi = best + h;
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    while hi - lo > 1e-11 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        }
    }
    (0.5 * (lo + hi)).exp()
}

/// Detector records of the swaps in a chain.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SwapRecord {
    pub s1_left: Sign,
    pub s1_right: Sign,
    pub s2: Sign,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SwapOutcome {
    pub state: IonIonState,
    pub p_s1_left: f64,
    /// Only present with a central repeater.
    pub p_s1_right: Option<f64>,
    pub p_s2: f64,
    /// Weight removed by the photon-number cutoff across all swaps.
    pub truncated_weight: f64,
}

impl SwapOutcome {
    /// Product of all swap success probabilities.
    pub fn success_probability(&self) -> f64 {
        self.p_s1_left * self.p_s1_right.unwrap_or(1.0) * self.p_s2
    }
}

/// Releases two memories onto a balanced beamsplitter and heralds a single
/// click. Returns the normalized state for the recorded detector and the
/// success probability summed over both detectors.
fn optical_swap(
    left: &DensityOp,
    left_mem: &str,
    right: &DensityOp,
    right_mem: &str,
    dark_click_prob: f64,
    sign: Sign,
) -> Result<(DensityOp, f64, f64)> {
    let mut joint = left.tensor(right)?;
    let truncated = joint.discard_overflow(left_mem, right_mem)?;
    let mixed = joint.apply_beamsplitter(left_mem, right_mem, 0.5, 0.0)?;
    let detectors = [left_mem, right_mem];
    let (rho, p) = mixed.herald_click(&detectors, &sign.pattern(), dark_click_prob)?;
    let (_, q) = mixed.herald_click(&detectors, &sign.flipped().pattern(), dark_click_prob)?;
    if p <= 0.0 {
        return Err(Error::ZeroProbability(format!("swap of `{left_mem}` and `{right_mem}` never succeeds")));
    }
    Ok((rho.normalized()?, p + q, truncated))
}

fn relabeled(link: &HeraldedLink, first: &str, second: &str) -> Result<DensityOp> {
    let (a, b) = link.modes();
    Ok(link.state().relabel(a, "#first")?.relabel(b, second)?.relabel("#first", first)?)
}

/// Joins edge-node and backbone links into an ion–ion state through optical
/// swaps. Memory efficiency is already part of the link states, so the swaps
/// themselves are lossless; `dark_click_prob` applies to each swap detector.
pub fn compose_final_state(
    en_left: &HeraldedLink,
    backbone: &[HeraldedLink],
    en_right: &HeraldedLink,
    topo: SwapTopology,
    dark_click_prob: f64,
    record: &SwapRecord,
) -> Result<SwapOutcome> {
    if backbone.len() != topo.backbone_links() {
        return Err(Error::TopologyMismatch(format!(
            "{:?} needs {} backbone links, got {}",
            topo,
            topo.backbone_links(),
            backbone.len()
        )));
    }
    let left = relabeled(en_left, "ion_l", "m_el")?;
    let right = relabeled(en_right, "ion_r", "m_er")?;
    let (rho, p_s1_left, p_s1_right, p_s2, truncated) = match topo {
        SwapTopology::WithoutRepeater => {
            let bb = relabeled(&backbone[0], "m_bl", "m_br")?;
            let (half, p1, t1) = optical_swap(&left, "m_el", &bb, "m_bl", dark_click_prob, record.s1_left)?;
            let (fin, p2, t2) = optical_swap(&half, "m_br", &right, "m_er", dark_click_prob, record.s2)?;
            (fin, p1, None, p2, t1 + t2)
        }
        SwapTopology::WithRepeater => {
            let bb1 = relabeled(&backbone[0], "m_b1l", "m_b1r")?;
            let bb2 = relabeled(&backbone[1], "m_b2l", "m_b2r")?;
            let (lh, p1l, t1) = optical_swap(&left, "m_el", &bb1, "m_b1l", dark_click_prob, record.s1_left)?;
            let (rh, p1r, t2) = optical_swap(&bb2, "m_b2r", &right, "m_er", dark_click_prob, record.s1_right)?;
            let (fin, p2, t3) = optical_swap(&lh, "m_b1r", &rh, "m_b2l", dark_click_prob, record.s2)?;
            (fin, p1l, Some(p1r), p2, t1 + t2 + t3)
        }
    };
    let rho = rho.permuted(&["ion_l", "ion_r"])?;
    Ok(SwapOutcome {
        state: IonIonState::from_density(&rho)?,
        p_s1_left,
        p_s1_right,
        p_s2,
        truncated_weight: truncated,
    })
}
