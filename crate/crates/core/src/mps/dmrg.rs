use faer::Mat;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::blocks::{BlockMat, BondSpace};
use super::state::{half_chain_entropy, physical_charges, MpsState, SiteTensor};
use crate::error::{Error, Result};
use crate::linalg::{self, LanczosOptions};
use crate::model::{ChainSpec, SiteOperators};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DmrgSettings {
    /// Discarded-weight target per bond.
    pub epsilon: f64,
    pub max_bond: usize,
    pub max_sweeps: usize,
    /// Sweeps at the final epsilon, without noise, before convergence may be declared.
    pub min_sweeps: usize,
    /// Convergence when the half-chain entropy of two consecutive sweeps differs by less.
    pub entropy_convergence: f64,
    /// Noise amplitude added to the two-site wavefunction, one entry per sweep.
    pub noise_schedule: Vec<f64>,
    /// Cold starts run their first sweeps at a looser epsilon.
    pub epsilon_ramp: bool,
    pub lanczos_tolerance: f64,
    pub lanczos_krylov: usize,
    pub magnetization: i64,
    pub seed: u64,
}

impl Default for DmrgSettings {
    fn default() -> Self {
        DmrgSettings {
            epsilon: 1e-10,
            max_bond: 1024,
            max_sweeps: 40,
            min_sweeps: 2,
            entropy_convergence: 1e-11,
            noise_schedule: vec![1e-4, 1e-5, 1e-6],
            epsilon_ramp: true,
            lanczos_tolerance: 1e-13,
            lanczos_krylov: 40,
            magnetization: 0,
            seed: 0x5eed,
        }
    }
}

impl DmrgSettings {
    pub fn with_epsilon(mut self, epsilon: f64) -> Self {
        self.epsilon = epsilon;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::InvalidInput(format!("DMRG settings: {msg}")));
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return bad("epsilon must lie in (0, 1)");
        }
        if self.max_bond == 0 || self.max_sweeps == 0 || self.lanczos_krylov < 2 {
            return bad("max_bond, max_sweeps must be positive and lanczos_krylov >= 2");
        }
        if !(self.entropy_convergence > 0.0) || !(self.lanczos_tolerance > 0.0) {
            return bad("tolerances must be positive");
        }
        if self.noise_schedule.iter().any(|a| !(a.is_finite() && *a >= 0.0)) {
            return bad("noise amplitudes must be finite and nonnegative");
        }
        Ok(())
    }

    fn epsilon_at(&self, sweep: usize, ramp: bool) -> f64 {
        if !ramp {
            return self.epsilon;
        }
        self.epsilon.max(1e-5 * 1e-2f64.powi(sweep as i32))
    }
}

#[derive(Debug, Clone)]
pub struct DmrgResult {
    pub mps: MpsState,
    pub energy: f64,
    pub half_chain_entropy: f64,
    pub sweeps_used: usize,
    pub largest_bond: usize,
    pub converged: bool,
    /// Some bond hit `max_bond` with discarded weight above epsilon in the last sweep.
    pub bond_cap_reached: bool,
    pub max_truncation_error: f64,
    pub sweep_energies: Vec<f64>,
    pub sweep_entropies: Vec<f64>,
}

/// Nearest-neighbour MPO, state `0` = all terms finished, `width - 1` = none started.
struct Mpo {
    width: usize,
    terms: Vec<(usize, usize, Vec<(usize, usize, f64)>)>,
}

const DONE: usize = 0;

impl Mpo {
    fn new(spec: &ChainSpec) -> Self {
        let ops = SiteOperators::new(spec);
        let jz = spec.variant.jz();
        let width = if jz != 0.0 { 5 } else { 4 };
        let start = width - 1;
        let d = spec.local_dim();
        let identity: Vec<_> = (0..d).map(|s| (s, s, 1.0)).collect();
        let scaled = |op: &crate::model::LocalOperator, a: f64| -> Vec<(usize, usize, f64)> {
            op.nonzeros().into_iter().map(|(i, j, v)| (i, j, a * v)).filter(|t| t.2 != 0.0).collect()
        };
        let mut terms = vec![
            (start, start, identity.clone()),
            (DONE, DONE, identity),
            (start, DONE, scaled(&ops.sz_squared, spec.d)),
            (start, 1, scaled(&ops.raising, -spec.j())),
            (1, DONE, scaled(&ops.lowering, 1.0)),
            (start, 2, scaled(&ops.lowering, -spec.j())),
            (2, DONE, scaled(&ops.raising, 1.0)),
        ];
        if jz != 0.0 {
            terms.push((start, 3, scaled(&ops.sz, jz)));
            terms.push((3, DONE, scaled(&ops.sz, 1.0)));
        }
        terms.retain(|t| !t.2.is_empty());
        Mpo { width, terms }
    }

    fn start(&self) -> usize {
        self.width - 1
    }
}

#[derive(Debug, Clone)]
enum Env {
    Zero,
    Identity,
    Op(BlockMat),
}

fn left_boundary(mpo: &Mpo) -> Vec<Env> {
    (0..mpo.width).map(|w| if w == mpo.start() { Env::Identity } else { Env::Zero }).collect()
}

fn right_boundary(mpo: &Mpo) -> Vec<Env> {
    (0..mpo.width).map(|w| if w == DONE { Env::Identity } else { Env::Zero }).collect()
}

fn finish(acc: Vec<BlockMat>, identity_at: usize) -> Vec<Env> {
    acc.into_iter()
        .enumerate()
        .map(|(w, m)| {
            if w == identity_at {
                Env::Identity
            } else if m.is_empty() {
                Env::Zero
            } else {
                Env::Op(m)
            }
        })
        .collect()
}

/// Environment left of site `i + 1` from the one left of site `i` and a
/// left-orthonormal tensor at `i`.
fn extend_left(env: &[Env], site: &SiteTensor, mpo: &Mpo) -> Vec<Env> {
    let d = site.mats.len();
    let mut half: Vec<Vec<Option<BlockMat>>> = vec![vec![None; d]; mpo.width];
    for (r, e) in env.iter().enumerate() {
        if let Env::Op(l) = e {
            for s in 0..d {
                half[r][s] = Some(l.matmul(&site.mats[s]));
            }
        }
    }
    let mut acc: Vec<BlockMat> = (0..mpo.width).map(|_| BlockMat::new(0)).collect();
    for (r, c, entries) in &mpo.terms {
        if *c == mpo.start() {
            continue;
        }
        for &(sp, s, v) in entries {
            let m = match &env[*r] {
                Env::Zero => continue,
                Env::Identity => &site.mats[s],
                Env::Op(_) => half[*r][s].as_ref().expect("computed above"),
            };
            site.mats[sp].tn_into(m, v, &mut acc[*c]);
        }
    }
    finish(acc, mpo.start())
}

/// Transposed environment right of site `i - 1` from the one right of site
/// `i` and a right-orthonormal tensor at `i`.
fn extend_right(env: &[Env], site: &SiteTensor, mpo: &Mpo) -> Vec<Env> {
    let d = site.mats.len();
    let mut half: Vec<Vec<Option<BlockMat>>> = vec![vec![None; d]; mpo.width];
    for (c, e) in env.iter().enumerate() {
        if let Env::Op(rt) = e {
            for s in 0..d {
                half[c][s] = Some(site.mats[s].matmul(rt));
            }
        }
    }
    let mut acc: Vec<BlockMat> = (0..mpo.width).map(|_| BlockMat::new(0)).collect();
    for (r, c, entries) in &mpo.terms {
        if *r == DONE {
            continue;
        }
        for &(sp, s, v) in entries {
            let m = match &env[*c] {
                Env::Zero => continue,
                Env::Identity => &site.mats[s],
                Env::Op(_) => half[*c][s].as_ref().expect("computed above"),
            };
            m.nt_into(&site.mats[sp], v, &mut acc[*r]);
        }
    }
    finish(acc, DONE)
}

/// Flat storage of a two-site wavefunction `theta[s, t]`, one dense block per
/// allowed `(s, t, left charge)`.
struct ThetaLayout {
    d: usize,
    charges: Vec<i32>,
    blocks: Vec<(usize, i32, usize, usize, usize)>,
    len: usize,
}

impl ThetaLayout {
    fn new(left: &BondSpace, right: &BondSpace, charges: &[i32]) -> Self {
        let d = charges.len();
        let mut blocks = Vec::new();
        let mut len = 0;
        for s in 0..d {
            for t in 0..d {
                for &(q, rows) in left.sectors() {
                    let cols = right.dim(q + charges[s] + charges[t]);
                    if cols > 0 {
                        blocks.push((s * d + t, q, rows, cols, len));
                        len += rows * cols;
                    }
                }
            }
        }
        ThetaLayout { d, charges: charges.to_vec(), blocks, len }
    }

    fn empty(&self) -> Vec<BlockMat> {
        (0..self.d * self.d).map(|st| BlockMat::new(self.charges[st / self.d] + self.charges[st % self.d])).collect()
    }

    fn unpack(&self, x: &[f64]) -> Vec<BlockMat> {
        let mut out = self.empty();
        for &(st, q, rows, cols, off) in &self.blocks {
            out[st].blocks.insert(q, Mat::from_fn(rows, cols, |i, j| x[off + i * cols + j]));
        }
        out
    }

    fn pack(&self, theta: &[BlockMat], y: &mut [f64]) {
        for &(st, q, rows, cols, off) in &self.blocks {
            let dst = &mut y[off..off + rows * cols];
            match theta[st].blocks.get(&q) {
                Some(b) => {
                    for i in 0..rows {
                        for j in 0..cols {
                            dst[i * cols + j] = b[(i, j)];
                        }
                    }
                }
                None => dst.fill(0.0),
            }
        }
    }
}

/// Two-site effective Hamiltonian applied to `theta`.
fn apply_heff(left: &[Env], right: &[Env], mpo: &Mpo, theta: &[BlockMat], d: usize) -> Vec<BlockMat> {
    let nst = d * d;
    let mut lt: Vec<Vec<Option<BlockMat>>> = vec![vec![None; nst]; mpo.width];
    for (r, e) in left.iter().enumerate() {
        if let Env::Op(l) = e {
            for st in 0..nst {
                lt[r][st] = Some(l.matmul(&theta[st]));
            }
        }
    }
    let mut x: Vec<Vec<BlockMat>> = vec![vec![BlockMat::new(0); nst]; mpo.width];
    for (r, c, entries) in &mpo.terms {
        for &(sp, s, v) in entries {
            for t in 0..d {
                let src = match &left[*r] {
                    Env::Zero => continue,
                    Env::Identity => &theta[s * d + t],
                    Env::Op(_) => lt[*r][s * d + t].as_ref().expect("computed above"),
                };
                x[*c][sp * d + t].axpy(v, src);
            }
        }
    }
    let mut z: Vec<Vec<BlockMat>> = vec![vec![BlockMat::new(0); nst]; mpo.width];
    for (c, e, entries) in &mpo.terms {
        if matches!(right[*e], Env::Zero) {
            continue;
        }
        for &(tp, t, v) in entries {
            for sp in 0..d {
                let src = &x[*c][sp * d + t];
                if !src.is_empty() {
                    z[*e][sp * d + tp].axpy(v, src);
                }
            }
        }
    }
    let mut out: Vec<BlockMat> = (0..nst).map(|_| BlockMat::new(0)).collect();
    for (e, env) in right.iter().enumerate() {
        for st in 0..nst {
            let src = &z[e][st];
            if src.is_empty() {
                continue;
            }
            match env {
                Env::Zero => {}
                Env::Identity => out[st].axpy(1.0, src),
                Env::Op(rt) => src.nn_into(rt, 1.0, &mut out[st]),
            }
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Direction {
    Right,
    Left,
}

struct Split {
    a: SiteTensor,
    b: SiteTensor,
    sigma: Vec<f64>,
    discarded: f64,
    capped: bool,
}

/// SVD of `theta` grouped by the charge of the middle bond, truncated to
/// discarded weight `epsilon` and at most `max_bond` states. The singular
/// values go right (`Direction::Right`) or left.
fn split_theta(
    theta: &[BlockMat],
    left: &BondSpace,
    right: &BondSpace,
    charges: &[i32],
    epsilon: f64,
    max_bond: usize,
    dir: Direction,
) -> Result<Split> {
    let d = charges.len();
    let mut mids: Vec<i32> = Vec::new();
    for q in left.charges() {
        for &n in charges {
            mids.push(q + n);
        }
    }
    mids.sort_unstable();
    mids.dedup();
    struct Sector {
        q: i32,
        rows: Vec<(usize, i32, usize, usize)>,
        cols: Vec<(usize, i32, usize, usize)>,
        u: Mat<f64>,
        sigma: Vec<f64>,
        v: Mat<f64>,
    }
    let mut sectors = Vec::new();
    for q in mids {
        let mut rows = Vec::new();
        let mut nr = 0;
        for (s, &n) in charges.iter().enumerate() {
            let dl = left.dim(q - n);
            if dl > 0 {
                rows.push((s, q - n, nr, dl));
                nr += dl;
            }
        }
        let mut cols = Vec::new();
        let mut nc = 0;
        for (t, &n) in charges.iter().enumerate() {
            let dr = right.dim(q + n);
            if dr > 0 {
                cols.push((t, q + n, nc, dr));
                nc += dr;
            }
        }
        if nr == 0 || nc == 0 {
            continue;
        }
        let mut m = Mat::<f64>::zeros(nr, nc);
        let mut any = false;
        for &(s, ql, r0, dl) in &rows {
            for &(t, _, c0, dr) in &cols {
                if let Some(b) = theta[s * d + t].blocks.get(&ql) {
                    m.as_mut().submatrix_mut(r0, c0, dl, dr).copy_from(b);
                    any = true;
                }
            }
        }
        if !any {
            continue;
        }
        let (u, sigma, v) = linalg::thin_svd(m.as_ref())?;
        sectors.push(Sector { q, rows, cols, u, sigma, v });
    }

    let mut all: Vec<(f64, usize, usize)> = Vec::new();
    for (k, sec) in sectors.iter().enumerate() {
        all.extend(sec.sigma.iter().enumerate().map(|(i, &s)| (s, k, i)));
    }
    all.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let total: f64 = all.iter().map(|x| x.0 * x.0).sum();
    if !(total > 0.0) {
        return Err(Error::EngineFailure("two-site wavefunction vanished".into()));
    }
    let mut keep = all.len();
    let mut discarded = 0.0;
    while keep > 1 {
        let w = all[keep - 1].0 * all[keep - 1].0;
        if discarded + w > epsilon * total {
            break;
        }
        discarded += w;
        keep -= 1;
    }
    let capped = keep > max_bond;
    if capped {
        discarded += all[max_bond..keep].iter().map(|x| x.0 * x.0).sum::<f64>();
        keep = max_bond;
    }
    let mut kept = vec![0usize; sectors.len()];
    for x in &all[..keep] {
        kept[x.1] += 1;
    }
    let norm = all[..keep].iter().map(|x| x.0 * x.0).sum::<f64>().sqrt();

    let mut a_mats: Vec<BlockMat> = charges.iter().map(|&n| BlockMat::new(n)).collect();
    let mut b_mats: Vec<BlockMat> = charges.iter().map(|&n| BlockMat::new(n)).collect();
    let mut mid_sectors = Vec::new();
    let mut sigma_out = Vec::new();
    for (sec, &k) in sectors.iter().zip(&kept) {
        if k == 0 {
            continue;
        }
        let sig: Vec<f64> = sec.sigma[..k].iter().map(|s| s / norm).collect();
        let (ls, rs) = match dir {
            Direction::Right => (vec![1.0; k], sig.clone()),
            Direction::Left => (sig.clone(), vec![1.0; k]),
        };
        for &(s, ql, r0, dl) in &sec.rows {
            a_mats[s].blocks.insert(ql, Mat::from_fn(dl, k, |i, j| sec.u[(r0 + i, j)] * ls[j]));
        }
        for &(t, _, c0, dr) in &sec.cols {
            b_mats[t].blocks.insert(sec.q, Mat::from_fn(k, dr, |i, j| rs[i] * sec.v[(c0 + j, i)]));
        }
        mid_sectors.push((sec.q, k));
        sigma_out.extend(sig);
    }
    let mid = BondSpace::from_sectors(mid_sectors);
    sigma_out.sort_by(|a, b| b.total_cmp(a));
    Ok(Split {
        a: SiteTensor { left: left.clone(), right: mid.clone(), mats: a_mats },
        b: SiteTensor { left: mid, right: right.clone(), mats: b_mats },
        sigma: sigma_out,
        discarded: discarded / total,
        capped,
    })
}


struct Engine {
    mpo: Mpo,
    charges: Vec<i32>,
    settings: DmrgSettings,
    mps: MpsState,
    left_envs: Vec<Option<Vec<Env>>>,
    right_envs: Vec<Option<Vec<Env>>>,
}

struct StepOutcome {
    energy: f64,
    sigma: Vec<f64>,
    discarded: f64,
    capped: bool,
}

impl Engine {
    fn new(mut mps: MpsState, settings: DmrgSettings) -> Result<Self> {
        mps.move_center_to(0)?;
        let mpo = Mpo::new(&mps.spec);
        let charges = physical_charges(&mps.spec);
        let l = mps.length();
        let mut right_envs: Vec<Option<Vec<Env>>> = vec![None; l];
        right_envs[l - 1] = Some(right_boundary(&mpo));
        for j in (1..l).rev() {
            let next = extend_right(right_envs[j].as_ref().expect("built"), &mps.sites[j], &mpo);
            right_envs[j - 1] = Some(next);
        }
        let mut left_envs: Vec<Option<Vec<Env>>> = vec![None; l];
        left_envs[0] = Some(left_boundary(&mpo));
        Ok(Engine { mpo, charges, settings, mps, left_envs, right_envs })
    }

    fn step(&mut self, i: usize, dir: Direction, epsilon: f64, noise: f64, rng: &mut ChaCha8Rng) -> Result<StepOutcome> {
        let d = self.charges.len();
        let (a, b) = (&self.mps.sites[i], &self.mps.sites[i + 1]);
        let layout = ThetaLayout::new(&a.left, &b.right, &self.charges);
        let mut theta = layout.empty();
        for s in 0..d {
            for t in 0..d {
                a.mats[s].nn_into(&b.mats[t], 1.0, &mut theta[s * d + t]);
            }
        }
        let mut x = vec![0.0; layout.len];
        layout.pack(&theta, &mut x);
        if linalg::norm(&x) == 0.0 {
            x = linalg::random_unit_vector(layout.len, rng.random());
        }
        let left = self.left_envs[i].as_ref().expect("left environment");
        let right = self.right_envs[i + 1].as_ref().expect("right environment");
        let mpo = &self.mpo;
        let opts = LanczosOptions {
            max_krylov: self.settings.lanczos_krylov,
            tolerance: self.settings.lanczos_tolerance,
            max_restarts: 4,
        };
        let out = linalg::lowest_eigenpair(
            layout.len,
            |v, w| {
                let th = layout.unpack(v);
                let h = apply_heff(left, right, mpo, &th, d);
                layout.pack(&h, w);
            },
            x,
            opts,
        )?;
        let mut vec = out.vector;
        if noise > 0.0 {
            for v in vec.iter_mut() {
                *v += noise * (rng.random::<f64>() - 0.5);
            }
            let n = linalg::norm(&vec);
            linalg::scale(1.0 / n, &mut vec);
        }
        let theta = layout.unpack(&vec);
        let (left_space, right_space) = (a.left.clone(), b.right.clone());
        let split = split_theta(&theta, &left_space, &right_space, &self.charges, epsilon, self.settings.max_bond, dir)?;
        self.mps.sites[i] = split.a;
        self.mps.sites[i + 1] = split.b;
        match dir {
            Direction::Right => {
                let env = extend_left(self.left_envs[i].as_ref().expect("left environment"), &self.mps.sites[i], &self.mpo);
                self.left_envs[i + 1] = Some(env);
                self.mps.center = i + 1;
            }
            Direction::Left => {
                let env =
                    extend_right(self.right_envs[i + 1].as_ref().expect("right environment"), &self.mps.sites[i + 1], &self.mpo);
                self.right_envs[i] = Some(env);
                self.mps.center = i;
            }
        }
        Ok(StepOutcome { energy: out.value, sigma: split.sigma, discarded: split.discarded, capped: split.capped })
    }
}

/// Ground state from a product-state cold start in the settings' sector.
pub fn dmrg_ground_state(spec: &ChainSpec, settings: &DmrgSettings) -> Result<DmrgResult> {
    let start = MpsState::product_in_sector(spec, settings.magnetization)?;
    run(start, settings, true)
}

/// Ground state warm-started from `initial`, typically the converged state at
/// a neighbouring coupling. No noise and no epsilon ramp are applied.
pub fn dmrg_warm_start(spec: &ChainSpec, settings: &DmrgSettings, initial: &MpsState) -> Result<DmrgResult> {
    if initial.length() != spec.length || initial.spec.spin != spec.spin || initial.magnetization != settings.magnetization {
        return Err(Error::ShapeMismatch("warm-start state does not match the chain or sector".into()));
    }
    let mut start = initial.clone();
    start.spec = *spec;
    run(start, settings, false)
}

fn run(start: MpsState, settings: &DmrgSettings, cold: bool) -> Result<DmrgResult> {
    settings.validate()?;
    let l = start.length();
    let mut engine = Engine::new(start, settings.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(settings.seed);
    let mid = l / 2;
    let mut energies = Vec::new();
    let mut entropies = Vec::new();
    let mut final_sweeps = 0usize;
    let mut converged = false;
    let mut last_discarded = 0.0;
    let mut last_capped = false;
    let mut sweeps = 0;
    while sweeps < settings.max_sweeps {
        let epsilon = settings.epsilon_at(sweeps, cold);
        let noise = if cold { settings.noise_schedule.get(sweeps).copied().unwrap_or(0.0) } else { 0.0 };
        let mut discarded: f64 = 0.0;
        let mut capped = false;
        let mut energy = f64::NAN;
        let mut entropy = f64::NAN;
        for i in 0..l - 1 {
            let o = engine.step(i, Direction::Right, epsilon, noise, &mut rng)?;
            discarded = discarded.max(o.discarded);
            capped |= o.capped;
        }
        for i in (0..l - 1).rev() {
            let o = engine.step(i, Direction::Left, epsilon, noise, &mut rng)?;
            discarded = discarded.max(o.discarded);
            capped |= o.capped;
            energy = o.energy;
            if i + 1 == mid {
                entropy = super::state::entropy_of_singular_values(&o.sigma);
            }
        }
        sweeps += 1;
        energies.push(energy);
        entropies.push(entropy);
        last_discarded = discarded;
        last_capped = capped;
        if epsilon == settings.epsilon && noise == 0.0 {
            final_sweeps += 1;
            let n = entropies.len();
            if final_sweeps >= settings.min_sweeps.max(2)
                && (entropies[n - 1] - entropies[n - 2]).abs() < settings.entropy_convergence
            {
                converged = true;
                break;
            }
        }
    }
    let mut mps = engine.mps;
    mps.max_truncation_error = last_discarded;
    let entropy = half_chain_entropy(&mps)?;
    Ok(DmrgResult {
        energy: *energies.last().expect("at least one sweep"),
        half_chain_entropy: entropy,
        sweeps_used: sweeps,
        largest_bond: mps.largest_bond(),
        converged,
        bond_cap_reached: last_capped,
        max_truncation_error: last_discarded,
        sweep_energies: energies,
        sweep_entropies: entropies,
        mps,
    })
}
