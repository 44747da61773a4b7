//! Ground truth independent of the closed forms: exhaustive dynamic
//! programming over endpoint paths, exact evaluation of arbitrary linear
//! policies, and the bracketing check for asymmetric chains.
//!
//! Value functions are kept as `(matrix, constant)` pairs per endpoint
//! state, so everything is exact at desk scale without discretizing states.

use serde::Serialize;

use crate::error::{FogError, Result};
use crate::estimation::PenaltyConfig;
use crate::linalg::{self, Mat, Vector};
use crate::model::{DelayProfile, LinearSystemModel, Observation, ReliabilityChain, TauInit};
use crate::policy::{sandwich_policy, ControllerRegime};
use crate::riccati::{backward_recursion, min_cost};
use crate::simulator::{self, SimulationConfig};

/// Horizon limit for exhaustive enumeration.
pub const ORACLE_MAX_HORIZON: usize = 16;

/// One ON/OFF sample path `τ_0 .. τ_{len-1}` and its probability.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TauPath {
    pub path: Vec<bool>,
    pub probability: f64,
}

/// All `2^len` paths of the chain, in lexicographic order (OFF first).
pub fn enumerate_tau_paths(chain: &ReliabilityChain, len: usize) -> Result<Vec<TauPath>> {
    if len > 20 {
        return Err(FogError::HorizonTooLarge {
            what: "path enumeration",
            horizon: len,
            limit: 20,
        });
    }
    let mut out = Vec::with_capacity(1 << len);
    let mut path = Vec::with_capacity(len);
    fn walk(
        chain: &ReliabilityChain,
        len: usize,
        prob: f64,
        path: &mut Vec<bool>,
        out: &mut Vec<TauPath>,
    ) {
        if path.len() == len {
            out.push(TauPath {
                path: path.clone(),
                probability: prob,
            });
            return;
        }
        let on_prob = match path.last() {
            None => chain.tau0.on_probability(),
            Some(&prev) => chain.next_on_probability(prev),
        };
        for on in [false, true] {
            path.push(on);
            walk(
                chain,
                len,
                prob * if on { on_prob } else { 1.0 - on_prob },
                path,
                out,
            );
            path.pop();
        }
    }
    walk(chain, len, 1.0, &mut path, &mut out);
    Ok(out)
}

/// Optimal expected cost and the gains that attain it.
#[derive(Debug, Clone, PartialEq)]
pub struct BruteForceSolution {
    pub cost: f64,
    /// Gain applied on ON stages, `u = -G_k x̂_k`; zero where no control is
    /// possible. For perfect match the gain depends only on `k`.
    pub on_gains: Vec<Mat>,
}

fn check_oracle_model(model: &LinearSystemModel, x0: &Vector) -> Result<()> {
    if model.horizon() > ORACLE_MAX_HORIZON {
        return Err(FogError::HorizonTooLarge {
            what: "oracle",
            horizon: model.horizon(),
            limit: ORACLE_MAX_HORIZON,
        });
    }
    if !model.is_exactly_observed() {
        return Err(FogError::Unsupported(
            "the oracle covers exact state observation only".into(),
        ));
    }
    if model.has_drift() {
        return Err(FogError::Unsupported(
            "the oracle assumes zero-mean disturbances".into(),
        ));
    }
    if x0.len() != model.state_dim() {
        return Err(FogError::Dimension("x0 length".into()));
    }
    Ok(())
}

/// Exact minimum expected cost over feasible policies, for any chain
/// (symmetric or not). With delay, the admissible controls are functions of
/// `(x_{k-M}, u_{k-M})` and the endpoint history, applied on the grid.
pub fn brute_force_min_cost(
    model: &LinearSystemModel,
    chain: &ReliabilityChain,
    delay: Option<DelayProfile>,
    x0: &Vector,
    tau0: TauInit,
) -> Result<f64> {
    brute_force_solution(model, chain, delay, x0, tau0).map(|s| s.cost)
}

pub fn brute_force_solution(
    model: &LinearSystemModel,
    chain: &ReliabilityChain,
    delay: Option<DelayProfile>,
    x0: &Vector,
    tau0: TauInit,
) -> Result<BruteForceSolution> {
    check_oracle_model(model, x0)?;
    let chain = chain.with_tau0(tau0);
    chain.validate()?;
    match delay {
        Some(d) if !d.is_perfect() => {
            d.check_horizon(model.horizon())?;
            delayed_dp(model, &chain, d, x0)
        }
        _ => perfect_dp(model, &chain, x0),
    }
}

/// Minimizes `uᵀZuu u + 2uᵀZux x` in closed form; returns `(Zxx - ZxuZuu⁻¹Zux, G)`.
fn minimize_block(z: &Mat, n: usize, stage: usize) -> Result<(Mat, Mat)> {
    let s = z.nrows() - n;
    let zxx = z.view((0, 0), (n, n)).into_owned();
    let zux = z.view((n, 0), (s, n)).into_owned();
    let zuu = z.view((n, n), (s, s)).into_owned();
    let gain = linalg::spd_solve(&zuu, &zux).ok_or_else(|| FogError::LinearSolve {
        stage,
        what: "oracle control Hessian".into(),
    })?;
    let value = linalg::symmetrize(&(zxx - zux.transpose() * &gain));
    Ok((value, gain))
}

fn mix(w_on: f64, on: &Mat, off: &Mat) -> Mat {
    on * w_on + off * (1.0 - w_on)
}

fn perfect_dp(
    model: &LinearSystemModel,
    chain: &ReliabilityChain,
    x0: &Vector,
) -> Result<BruteForceSolution> {
    let horizon = model.horizon();
    let n = model.state_dim();
    let s = model.control_dim();
    // Index 0 = OFF, 1 = ON at the current stage.
    let mut val = [model.q_terminal().clone(), model.q_terminal().clone()];
    let mut cst = [0.0_f64; 2];
    let mut gains = vec![Mat::zeros(s, n); horizon];
    for k in (0..horizon).rev() {
        let (a, b, q, r, w) = (model.a(k), model.b(k), model.q(k), model.r(k), model.w(k));
        let mut new_val = val.clone();
        let mut new_cst = [0.0; 2];
        for tau in [0usize, 1] {
            let p_on = chain.next_on_probability(tau == 1);
            let e = mix(p_on, &val[1], &val[0]);
            let ce = p_on * cst[1] + (1.0 - p_on) * cst[0];
            let ae = a.transpose() * &e;
            let base = q + &ae * a;
            new_val[tau] = if tau == 1 {
                let mut z = Mat::zeros(n + s, n + s);
                z.view_mut((0, 0), (n, n)).copy_from(&base);
                let cross = b.transpose() * &e * a;
                z.view_mut((n, 0), (s, n)).copy_from(&cross);
                z.view_mut((0, n), (n, s)).copy_from(&cross.transpose());
                z.view_mut((n, n), (s, s))
                    .copy_from(&(r + b.transpose() * &e * b));
                let (v, g) = minimize_block(&z, n, k)?;
                gains[k] = g;
                v
            } else {
                linalg::symmetrize(&base)
            };
            new_cst[tau] = linalg::trace_product(&e, w) + ce;
        }
        val = new_val;
        cst = new_cst;
    }
    let pi0 = chain.tau0.on_probability();
    let cost = pi0 * (linalg::quad_form(&val[1], x0) + cst[1])
        + (1.0 - pi0) * (linalg::quad_form(&val[0], x0) + cst[0]);
    Ok(BruteForceSolution {
        cost,
        on_gains: gains,
    })
}

/// Propagation maps over `len` stages starting at `start`:
/// `x_{start+i} = Φ_i x_start + Γ_i u_start + noise` with noise covariance `N_i`.
struct BlockMaps {
    phi: Vec<Mat>,
    gamma: Vec<Mat>,
    noise: Vec<Mat>,
}

fn block_maps(model: &LinearSystemModel, start: usize, len: usize) -> BlockMaps {
    let n = model.state_dim();
    let s = model.control_dim();
    let mut phi = vec![Mat::identity(n, n)];
    let mut gamma = vec![Mat::zeros(n, s)];
    let mut noise = vec![Mat::zeros(n, n)];
    for i in 0..len {
        let k = start + i;
        let a = model.a(k);
        phi.push(a * &phi[i]);
        gamma.push(if i == 0 {
            model.b(k).clone()
        } else {
            a * &gamma[i]
        });
        noise.push(linalg::symmetrize(
            &(a * &noise[i] * a.transpose() + model.w(k)),
        ));
    }
    BlockMaps { phi, gamma, noise }
}

/// Weight of `[x̂; u]` over one block, ending on `terminal`, plus the
/// in-block noise cost (terminal noise included only if `terminal_noise`).
fn block_weight(
    model: &LinearSystemModel,
    maps: &BlockMaps,
    start: usize,
    terminal: &Mat,
    terminal_noise: bool,
) -> (Mat, f64) {
    let n = model.state_dim();
    let s = model.control_dim();
    let len = maps.phi.len() - 1;
    let mut z = Mat::zeros(n + s, n + s);
    z.view_mut((n, n), (s, s)).copy_from(model.r(start));
    let mut noise_cost = 0.0;
    let stack = |i: usize| {
        let mut m = Mat::zeros(n, n + s);
        m.view_mut((0, 0), (n, n)).copy_from(&maps.phi[i]);
        m.view_mut((0, n), (n, s)).copy_from(&maps.gamma[i]);
        m
    };
    for i in 0..len {
        let h = stack(i);
        let q = model.q(start + i);
        z += h.transpose() * q * &h;
        noise_cost += linalg::trace_product(q, &maps.noise[i]);
    }
    let h = stack(len);
    z += h.transpose() * terminal * &h;
    if terminal_noise {
        noise_cost += linalg::trace_product(terminal, &maps.noise[len]);
    }
    (linalg::symmetrize(&z), noise_cost)
}

fn delayed_dp(
    model: &LinearSystemModel,
    chain: &ReliabilityChain,
    delay: DelayProfile,
    x0: &Vector,
) -> Result<BruteForceSolution> {
    let horizon = model.horizon();
    let n = model.state_dim();
    let s = model.control_dim();
    let m = delay.total();
    let terms = delay.terms(horizon).expect("M >= 1");
    let c = terms.c;
    let mut gains = vec![Mat::zeros(s, n); horizon];

    if c == 0 {
        let maps = block_maps(model, 0, horizon);
        let (z, noise) = block_weight(model, &maps, 0, model.q_terminal(), true);
        let zxx = z.view((0, 0), (n, n)).into_owned();
        return Ok(BruteForceSolution {
            cost: linalg::quad_form(&zxx, x0) + noise,
            on_gains: gains,
        });
    }

    // Value of block j (control at jM) given the gate g_j: x̂ᵀS x̂ + const.
    let mut next: Option<([Mat; 2], [f64; 2])> = None;
    for j in (1..=c).rev() {
        let start = j * m;
        let len = if j == c { horizon - c * m } else { m };
        let maps = block_maps(model, start, len);
        let sigma_eps = block_maps(model, start - m, m).noise.pop().expect("M >= 1");
        let mut val = [Mat::zeros(n, n), Mat::zeros(n, n)];
        let mut cst = [0.0; 2];
        for g in [0usize, 1] {
            let (z, noise) = match &next {
                None => block_weight(model, &maps, start, model.q_terminal(), true),
                Some((nv, nc)) => {
                    let p_on = chain.transition_probability(g == 1, true, m);
                    let t = mix(p_on, &nv[1], &nv[0]);
                    let (z, noise) = block_weight(model, &maps, start, &t, false);
                    (z, noise + p_on * nc[1] + (1.0 - p_on) * nc[0])
                }
            };
            let zxx = z.view((0, 0), (n, n)).into_owned();
            cst[g] = noise + linalg::trace_product(&zxx, &sigma_eps);
            val[g] = if g == 1 {
                let (v, gain) = minimize_block(&z, n, start)?;
                gains[start] = gain;
                v
            } else {
                zxx
            };
        }
        next = Some((val, cst));
    }

    let (nv, nc) = next.expect("c >= 1");
    let p_first = chain.on_probability_after(chain.tau0.on_probability(), delay.forward);
    let t = mix(p_first, &nv[1], &nv[0]);
    let maps = block_maps(model, 0, m);
    let (z, noise) = block_weight(model, &maps, 0, &t, false);
    let zxx = z.view((0, 0), (n, n)).into_owned();
    let cost = linalg::quad_form(&zxx, x0) + noise + p_first * nc[1] + (1.0 - p_first) * nc[0];
    Ok(BruteForceSolution {
        cost,
        on_gains: gains,
    })
}

/// Exact expected cost of the linear law `u = -G_k x̂_k` (gated by the
/// endpoint, on the control grid when delayed) under an arbitrary chain.
pub fn evaluate_linear_policy(
    model: &LinearSystemModel,
    chain: &ReliabilityChain,
    delay: DelayProfile,
    gains: &[Mat],
    x0: &Vector,
) -> Result<f64> {
    check_oracle_model(model, x0)?;
    chain.validate()?;
    if gains.len() != model.horizon() {
        return Err(FogError::Dimension("one gain per stage required".into()));
    }
    let x0x0 = x0 * x0.transpose();
    if delay.is_perfect() {
        let mut total = 0.0;
        perfect_walk(model, chain, gains, 0, None, 1.0, x0x0, &mut total);
        Ok(total)
    } else {
        delay.check_horizon(model.horizon())?;
        Ok(delayed_walk(model, chain, delay, gains, &x0x0))
    }
}

/// Exact expected cost of a controller regime (exact state, no drift).
pub fn evaluate_policy_cost(
    model: &LinearSystemModel,
    chain: &ReliabilityChain,
    policy: &ControllerRegime,
    x0: &Vector,
) -> Result<f64> {
    if policy.observation != Observation::Full {
        return Err(FogError::Unsupported(
            "exact policy evaluation covers exact state observation only".into(),
        ));
    }
    evaluate_linear_policy(model, chain, policy.delay, &policy.gains.v, x0)
}

#[allow(clippy::too_many_arguments)]
fn perfect_walk(
    model: &LinearSystemModel,
    chain: &ReliabilityChain,
    gains: &[Mat],
    k: usize,
    prev: Option<bool>,
    prob: f64,
    second_moment: Mat,
    total: &mut f64,
) {
    if k == model.horizon() {
        *total += prob * linalg::trace_product(model.q_terminal(), &second_moment);
        return;
    }
    let on_prob = match prev {
        None => chain.tau0.on_probability(),
        Some(t) => chain.next_on_probability(t),
    };
    for on in [false, true] {
        let pr = prob * if on { on_prob } else { 1.0 - on_prob };
        if pr == 0.0 {
            continue;
        }
        let a = model.a(k);
        let mut stage = linalg::trace_product(model.q(k), &second_moment);
        let closed = if on {
            let g = &gains[k];
            stage += linalg::trace_product(&(g.transpose() * model.r(k) * g), &second_moment);
            a - model.b(k) * g
        } else {
            a.clone()
        };
        *total += pr * stage;
        let next =
            linalg::symmetrize(&(&closed * &second_moment * closed.transpose() + model.w(k)));
        perfect_walk(model, chain, gains, k + 1, Some(on), pr, next, total);
    }
}

/// Walk over gate outcomes, tracking the second moment of the predictor
/// estimate and the covariance of its error.
fn delayed_walk(
    model: &LinearSystemModel,
    chain: &ReliabilityChain,
    delay: DelayProfile,
    gains: &[Mat],
    x0x0: &Mat,
) -> f64 {
    let horizon = model.horizon();
    let m = delay.total();
    let c = delay.terms(horizon).expect("M >= 1").c;

    let pre_len = if c == 0 { horizon } else { m };
    let maps = block_maps(model, 0, pre_len);
    let mut total = 0.0;
    for i in 0..pre_len {
        let x = &maps.phi[i] * x0x0 * maps.phi[i].transpose() + &maps.noise[i];
        total += linalg::trace_product(model.q(i), &x);
    }
    if c == 0 {
        let x = &maps.phi[pre_len] * x0x0 * maps.phi[pre_len].transpose() + &maps.noise[pre_len];
        return total + linalg::trace_product(model.q_terminal(), &x);
    }
    let xhat = &maps.phi[m] * x0x0 * maps.phi[m].transpose();
    let eps = maps.noise[m].clone();

    let ctx = GateWalk {
        model,
        chain,
        gains,
        m,
        c,
        first_on: chain.on_probability_after(chain.tau0.on_probability(), delay.forward),
    };
    ctx.walk(1, None, 1.0, &xhat, &eps, &mut total);
    total
}

struct GateWalk<'a> {
    model: &'a LinearSystemModel,
    chain: &'a ReliabilityChain,
    gains: &'a [Mat],
    m: usize,
    c: usize,
    first_on: f64,
}

impl GateWalk<'_> {
    /// Block `j` starts at the control stage `jM`; `xhat` is the second
    /// moment of the predictor there and `eps` the covariance of its error.
    fn walk(
        &self,
        j: usize,
        prev: Option<bool>,
        prob: f64,
        xhat: &Mat,
        eps: &Mat,
        total: &mut f64,
    ) {
        let model = self.model;
        let start = j * self.m;
        let last = j == self.c;
        let len = if last {
            model.horizon() - start
        } else {
            self.m
        };
        let maps = block_maps(model, start, len);
        let on_prob = match prev {
            None => self.first_on,
            Some(g) => self.chain.transition_probability(g, true, self.m),
        };
        let g = &self.gains[start];
        for on in [false, true] {
            let pr = prob * if on { on_prob } else { 1.0 - on_prob };
            if pr == 0.0 {
                continue;
            }
            let closed = |i: usize| -> Mat {
                if on {
                    &maps.phi[i] - &maps.gamma[i] * g
                } else {
                    maps.phi[i].clone()
                }
            };
            let propagated = |i: usize| -> Mat {
                let f = closed(i);
                &f * xhat * f.transpose() + &maps.phi[i] * eps * maps.phi[i].transpose()
            };
            let mut cost = 0.0;
            if on {
                cost += linalg::trace_product(&(g.transpose() * model.r(start) * g), xhat);
            }
            for i in 0..len {
                cost +=
                    linalg::trace_product(model.q(start + i), &(propagated(i) + &maps.noise[i]));
            }
            if last {
                cost += linalg::trace_product(
                    model.q_terminal(),
                    &(propagated(len) + &maps.noise[len]),
                );
                *total += pr * cost;
            } else {
                *total += pr * cost;
                let next_hat = linalg::symmetrize(&propagated(self.m));
                self.walk(j + 1, Some(on), pr, &next_hat, &maps.noise[self.m], total);
            }
        }
    }
}

/// How the policy value of a bound check was obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum BoundMethod {
    Exact,
    MonteCarlo,
}

/// `lower ≤ policy_value ≤ upper` for an asymmetric chain with `p > 1 - q`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoundReport {
    pub p: f64,
    pub q: f64,
    pub lower: f64,
    pub upper: f64,
    pub policy_value: f64,
    pub standard_error: f64,
    pub method: BoundMethod,
    pub tolerance: f64,
    pub holds: bool,
}

/// Horizon up to which the bracket check evaluates the policy exactly.
pub const EXACT_BOUND_MAX_HORIZON: usize = 10;

/// Options for the Monte Carlo fallback of [`bound_check`].
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BoundCheckConfig {
    pub replications: usize,
    pub seed: u64,
    pub penalty: PenaltyConfig,
}

impl Default for BoundCheckConfig {
    fn default() -> Self {
        BoundCheckConfig {
            replications: 20_000,
            seed: 0x5eed,
            penalty: PenaltyConfig::monte_carlo(20_000, 0x5eed),
        }
    }
}

/// Brackets the symmetric-gains policy on an asymmetric chain between the
/// optima of the two symmetric chains `J*(p, 1-p)` and `J*(1-q, q)`.
pub fn bound_check(
    model: &LinearSystemModel,
    chain: &ReliabilityChain,
    delay: DelayProfile,
    observation: Observation,
    x0: &Vector,
    config: &BoundCheckConfig,
) -> Result<BoundReport> {
    let policy = sandwich_policy(model, chain, delay, observation)?;
    let symmetric_cost = |p: f64| -> Result<f64> {
        let sym = ReliabilityChain::symmetric(p, chain.tau0)?;
        let schedule = backward_recursion(model, p, Some(delay), observation)?;
        let penalty = if model.horizon() <= crate::estimation::EXACT_PENALTY_MAX_HORIZON {
            PenaltyConfig::exact()
        } else {
            config.penalty
        };
        Ok(min_cost(&schedule, model, &sym, x0, &penalty)?.total)
    };
    let lower = symmetric_cost(chain.p)?;
    let upper = symmetric_cost(1.0 - chain.q)?;
    let exact = observation == Observation::Full
        && model.horizon() <= EXACT_BOUND_MAX_HORIZON
        && !model.has_drift();
    let (policy_value, standard_error, method) = if exact {
        (
            evaluate_policy_cost(model, chain, &policy, x0)?,
            0.0,
            BoundMethod::Exact,
        )
    } else {
        let sim = simulator::run(
            model,
            chain,
            &policy,
            x0,
            &SimulationConfig::new(config.replications, config.seed),
        )?;
        (sim.mean_cost, sim.std_error, BoundMethod::MonteCarlo)
    };
    let tolerance = match method {
        BoundMethod::Exact => 1e-9 * lower.abs().max(upper.abs()).max(1.0),
        BoundMethod::MonteCarlo => 3.0 * standard_error,
    };
    let holds = lower - tolerance <= policy_value && policy_value <= upper + tolerance;
    Ok(BoundReport {
        p: chain.p,
        q: chain.q,
        lower,
        upper,
        policy_value,
        standard_error,
        method,
        tolerance,
        holds,
    })
}
