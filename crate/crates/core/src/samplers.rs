//! Configuration samplers: threshold-coupled Bernoulli percolation, heat-bath
//! Glauber dynamics and monotone coupling from the past.
//!
//! Every random quantity comes from a ChaCha8 stream keyed by
//! `(master seed, domain)` with the replica index as stream number, so runs
//! are bit-reproducible and replicas never share randomness.

use std::collections::VecDeque;
use std::io::{Read, Write};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::cluster::Histogram;
use crate::config::EdgeConfig;
use crate::error::{Error, Result};
use crate::exact::{enumerate_measure, ModelParams};
use crate::graph::WeightedGraph;
use crate::scalar::Scalar;
use crate::stats::two_sided_z;
use crate::unionfind::UnionFind;

/// Stream domains; two streams with different domains are independent.
pub mod domain {
    pub const EDGES: u64 = 1;
    pub const GHOST: u64 = 2;
    pub const CFTP: u64 = 3;
    pub const GLAUBER: u64 = 4;
    pub const BOOTSTRAP: u64 = 5;
    pub const MEAN_FIELD: u64 = 6;
}

/// The random stream for replica `index` of `domain` under `master_seed`.
pub fn stream_rng(master_seed: u64, domain: u64, index: u64) -> ChaCha8Rng {
    let mut key = [0u8; 32];
    key[..8].copy_from_slice(&master_seed.to_le_bytes());
    key[8..16].copy_from_slice(&domain.to_le_bytes());
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// One uniform per edge; thresholding at `p_e(β)` couples all `β` at once.
#[derive(Clone, Debug, PartialEq)]
pub struct CouplingSheet {
    uniforms: Vec<f64>,
}

impl CouplingSheet {
    pub fn sample<R: Rng + ?Sized>(n_edges: usize, rng: &mut R) -> Self {
        Self { uniforms: (0..n_edges).map(|_| rng.random::<f64>()).collect() }
    }

    pub fn uniforms(&self) -> &[f64] {
        &self.uniforms
    }

    /// `ω(e) = 1{U_e < 1 − e^{−βJ_e}}`. The strict inequality makes `β = 0` empty
    /// even when a uniform is exactly zero.
    pub fn config_at<S: Scalar>(&self, g: &WeightedGraph<S>, beta: S) -> EdgeConfig {
        EdgeConfig::from_bits(
            g.edges().iter().zip(&self.uniforms).map(|(e, &u)| u < (-(-beta * e.coupling).exp_m1()).as_f64()).collect(),
        )
    }
}

/// Configurations `[replica][grid point]` of Bernoulli percolation at each
/// `β` of a sorted grid, threshold-coupled so every replica is monotone in `β`.
pub fn sample_bernoulli_coupled<S: Scalar>(
    g: &WeightedGraph<S>,
    betas: &[S],
    replicas: u64,
    seed: u64,
) -> Result<Vec<Vec<EdgeConfig>>> {
    if betas.windows(2).any(|w| !(w[0] <= w[1])) {
        return Err(Error::InvalidSpec("beta grid must be sorted ascending".into()));
    }
    Ok((0..replicas)
        .into_par_iter()
        .map(|i| {
            let sheet = CouplingSheet::sample(g.n_edges(), &mut stream_rng(seed, domain::EDGES, i));
            betas.iter().map(|&b| sheet.config_at(g, b)).collect()
        })
        .collect())
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ConnectivityMode {
    /// Breadth-first search from one endpoint with early exit.
    Bfs,
    /// Union-find over all other open edges.
    Rebuild,
    /// Currently BFS; the early exit wins on the sparse graphs used here.
    #[default]
    Auto,
}

/// Conditional law used by the heat-bath update.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ConditionalRule {
    #[default]
    Exact,
    /// Uses `1/q` in place of `q`: a deliberately wrong rule for negative controls.
    SwappedQ,
}

/// Scratch space for connectivity queries.
#[derive(Clone, Debug)]
pub struct Connectivity {
    mode: ConnectivityMode,
    seen: Vec<u32>,
    epoch: u32,
    queue: VecDeque<usize>,
    uf: UnionFind,
}

impl Connectivity {
    pub fn new(n_vertices: usize, mode: ConnectivityMode) -> Self {
        Self { mode, seen: vec![0; n_vertices], epoch: 0, queue: VecDeque::new(), uf: UnionFind::new(n_vertices) }
    }

    /// Whether the endpoints of `e` are joined by open edges other than `e`.
    pub fn connected_off<S: Scalar>(&mut self, g: &WeightedGraph<S>, omega: &EdgeConfig, e: usize) -> bool {
        let edge = g.edge(e);
        if edge.is_loop() {
            return true;
        }
        match self.mode {
            ConnectivityMode::Bfs | ConnectivityMode::Auto => self.bfs(g, omega, e, edge.u, edge.v),
            ConnectivityMode::Rebuild => {
                self.uf.reset();
                for (f, other) in g.edges().iter().enumerate() {
                    if f != e && omega.is_open(f) {
                        self.uf.union(other.u, other.v);
                    }
                }
                self.uf.connected(edge.u, edge.v)
            }
        }
    }

    fn bfs<S: Scalar>(
        &mut self,
        g: &WeightedGraph<S>,
        omega: &EdgeConfig,
        skip: usize,
        from: usize,
        to: usize,
    ) -> bool {
        self.epoch = self.epoch.wrapping_add(1);
        if self.epoch == 0 {
            self.seen.fill(0);
            self.epoch = 1;
        }
        self.queue.clear();
        self.seen[from] = self.epoch;
        self.queue.push_back(from);
        while let Some(x) = self.queue.pop_front() {
            for &f in g.incident(x) {
                if f == skip || !omega.is_open(f) {
                    continue;
                }
                let y = g.edge(f).other(x);
                if y == to {
                    return true;
                }
                if self.seen[y] != self.epoch {
                    self.seen[y] = self.epoch;
                    self.queue.push_back(y);
                }
            }
        }
        false
    }
}

/// Precomputed open probabilities for single-edge heat-bath updates.
#[derive(Clone, Debug)]
pub struct HeatBath {
    /// `1 − e^{−βJ_e}`: endpoints already connected.
    p_connected: Vec<f64>,
    /// `w_e / (w_e + q)`: endpoints in different clusters.
    p_split: Vec<f64>,
    conn: Connectivity,
}

impl HeatBath {
    pub fn new<S: Scalar>(
        g: &WeightedGraph<S>,
        params: &ModelParams<S>,
        mode: ConnectivityMode,
        rule: ConditionalRule,
    ) -> Self {
        let q = match rule {
            ConditionalRule::Exact => params.q,
            ConditionalRule::SwappedQ => params.q.recip(),
        };
        let mut p_connected = Vec::with_capacity(g.n_edges());
        let mut p_split = Vec::with_capacity(g.n_edges());
        for e in g.edges() {
            let w = params.edge_weight(e.coupling);
            p_connected.push(params.edge_probability(e.coupling).as_f64());
            // βJ large enough to overflow w: the limit of w/(w+q) is 1.
            p_split.push(if w.is_finite() { (w / (w + q)).as_f64() } else { 1.0 });
        }
        Self { p_connected, p_split, conn: Connectivity::new(g.n_vertices(), mode) }
    }

    /// Conditional probability that `e` is open given the rest of `ω`.
    pub fn open_probability<S: Scalar>(&mut self, g: &WeightedGraph<S>, omega: &EdgeConfig, e: usize) -> f64 {
        if self.conn.connected_off(g, omega, e) {
            self.p_connected[e]
        } else {
            self.p_split[e]
        }
    }

    /// Resamples `ω(e)`: open iff `u < P(open | rest)`.
    pub fn update<S: Scalar>(&mut self, g: &WeightedGraph<S>, omega: &mut EdgeConfig, e: usize, u: f64) {
        let p = self.open_probability(g, omega, e);
        omega.set(e, u < p);
    }
}

/// One heat-bath update of edge `e` with uniform `u`, returning the new configuration.
pub fn heat_bath_step<S: Scalar>(
    g: &WeightedGraph<S>,
    omega: &EdgeConfig,
    e: usize,
    params: &ModelParams<S>,
    u: f64,
) -> EdgeConfig {
    let mut hb = HeatBath::new(g, params, ConnectivityMode::Auto, ConditionalRule::Exact);
    let mut next = omega.clone();
    hb.update(g, &mut next, e, u);
    next
}

/// Default CFTP budget in single-edge updates.
pub const DEFAULT_CFTP_MAX_UPDATES: u64 = 1 << 30;

#[derive(Clone, Debug, PartialEq)]
pub struct CftpOutcome {
    pub config: EdgeConfig,
    /// Length `T` of the coalescing run.
    pub updates: u64,
}

/// Exact sample by monotone coupling from the past.
///
/// The update at time `−t` touches edge `(m−1) − ((t−1) mod m)` with the
/// `t`-th stored uniform, so every run from `−T` with `m | T` is a sequence of
/// full systematic sweeps. `T` starts at `m` and doubles; the uniforms of the
/// most recent times are reused across restarts as the method requires.
pub fn cftp_sample<S: Scalar, R: Rng + ?Sized>(
    g: &WeightedGraph<S>,
    params: &ModelParams<S>,
    rng: &mut R,
    max_updates: u64,
    mode: ConnectivityMode,
) -> Result<CftpOutcome> {
    cftp_sample_with_rule(g, params, rng, max_updates, mode, ConditionalRule::Exact)
}

pub fn cftp_sample_with_rule<S: Scalar, R: Rng + ?Sized>(
    g: &WeightedGraph<S>,
    params: &ModelParams<S>,
    rng: &mut R,
    max_updates: u64,
    mode: ConnectivityMode,
    rule: ConditionalRule,
) -> Result<CftpOutcome> {
    if rule == ConditionalRule::SwappedQ && params.q != S::one() {
        return Err(Error::Inapplicable("CFTP needs a monotone update; the swapped rule has q < 1".into()));
    }
    let m = g.n_edges();
    if m == 0 {
        return Ok(CftpOutcome { config: EdgeConfig::closed(0), updates: 0 });
    }
    let mut hb = HeatBath::new(g, params, mode, rule);
    let mut uniforms: Vec<f64> = Vec::new();
    let mut horizon = m as u64;
    loop {
        if horizon > max_updates {
            return Err(Error::Budget { max_updates });
        }
        while (uniforms.len() as u64) < horizon {
            uniforms.push(rng.random::<f64>());
        }
        let mut lower = EdgeConfig::closed(m);
        let mut upper = EdgeConfig::open(m);
        for t in (1..=horizon).rev() {
            let e = (m - 1) - ((t - 1) % m as u64) as usize;
            let u = uniforms[(t - 1) as usize];
            hb.update(g, &mut lower, e, u);
            hb.update(g, &mut upper, e, u);
            debug_assert!(lower.le(&upper), "monotone sandwich broken at time -{t}");
        }
        if lower == upper {
            return Ok(CftpOutcome { config: lower, updates: horizon });
        }
        horizon = horizon.saturating_mul(2);
    }
}

/// State of a systematic-scan heat-bath chain.
#[derive(Clone, Debug, PartialEq)]
pub struct ChainState {
    pub config: EdgeConfig,
    pub sweeps: u64,
}

/// Heat-bath chain that scans edges in order, one uniform per update.
pub struct GlauberChain<'g, S> {
    graph: &'g WeightedGraph<S>,
    heat_bath: HeatBath,
    state: ChainState,
}

impl<'g, S: Scalar> GlauberChain<'g, S> {
    pub fn new(
        graph: &'g WeightedGraph<S>,
        params: &ModelParams<S>,
        initial: EdgeConfig,
        mode: ConnectivityMode,
        rule: ConditionalRule,
    ) -> Self {
        assert_eq!(initial.len(), graph.n_edges(), "initial state must cover every edge");
        Self {
            graph,
            heat_bath: HeatBath::new(graph, params, mode, rule),
            state: ChainState { config: initial, sweeps: 0 },
        }
    }

    pub fn sweep<R: Rng + ?Sized>(&mut self, rng: &mut R) {
        for e in 0..self.graph.n_edges() {
            let u = rng.random::<f64>();
            self.heat_bath.update(self.graph, &mut self.state.config, e, u);
        }
        self.state.sweeps += 1;
    }

    pub fn run<R: Rng + ?Sized>(&mut self, sweeps: u64, rng: &mut R) {
        for _ in 0..sweeps {
            self.sweep(rng);
        }
    }

    pub fn state(&self) -> &ChainState {
        &self.state
    }

    pub fn config(&self) -> &EdgeConfig {
        &self.state.config
    }
}

/// Runs `sweeps` systematic sweeps from the all-closed state.
pub fn glauber_chain<S: Scalar>(g: &WeightedGraph<S>, params: &ModelParams<S>, sweeps: u64, seed: u64) -> ChainState {
    let mut rng = stream_rng(seed, domain::GLAUBER, 0);
    let mut chain =
        GlauberChain::new(g, params, EdgeConfig::closed(g.n_edges()), ConnectivityMode::Auto, ConditionalRule::Exact);
    chain.run(sweeps, &mut rng);
    chain.state
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum SamplerKind {
    /// Independent edges; only for `q = 1`.
    Bernoulli,
    Cftp {
        max_updates: u64,
    },
    /// Each replica burns in, then emits `per_replica` states `thin` sweeps apart.
    Glauber {
        burn_in: u64,
        thin: u64,
        per_replica: u64,
    },
}

/// Reproducible description of a batch of samples.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SamplingPlan {
    pub kind: SamplerKind,
    pub replicas: u64,
    pub seed: u64,
    #[serde(default)]
    pub connectivity: ConnectivityMode,
    #[serde(default)]
    pub rule: ConditionalRule,
}

impl SamplingPlan {
    pub fn samples(&self) -> u64 {
        match self.kind {
            SamplerKind::Glauber { per_replica, .. } => self.replicas * per_replica,
            _ => self.replicas,
        }
    }
}

/// Draws the planned samples and maps each through `f`, in replica order.
///
/// Replicas run in parallel on disjoint streams; the output order does not
/// depend on the thread count.
pub fn sample_map<S, T, F>(g: &WeightedGraph<S>, params: &ModelParams<S>, plan: &SamplingPlan, f: F) -> Result<Vec<T>>
where
    S: Scalar,
    T: Send,
    F: Fn(&EdgeConfig) -> T + Sync,
{
    if plan.kind == SamplerKind::Bernoulli && params.q != S::one() {
        return Err(Error::Inapplicable(format!("Bernoulli sampler needs q = 1, got q = {}", params.q)));
    }
    let per_replica: Vec<Result<Vec<T>>> = (0..plan.replicas)
        .into_par_iter()
        .map(|i| -> Result<Vec<T>> {
            match plan.kind {
                SamplerKind::Bernoulli => {
                    let sheet = CouplingSheet::sample(g.n_edges(), &mut stream_rng(plan.seed, domain::EDGES, i));
                    Ok(vec![f(&sheet.config_at(g, params.beta))])
                }
                SamplerKind::Cftp { max_updates } => {
                    let mut rng = stream_rng(plan.seed, domain::CFTP, i);
                    let out = cftp_sample_with_rule(g, params, &mut rng, max_updates, plan.connectivity, plan.rule)?;
                    Ok(vec![f(&out.config)])
                }
                SamplerKind::Glauber { burn_in, thin, per_replica } => {
                    let mut rng = stream_rng(plan.seed, domain::GLAUBER, i);
                    let mut chain =
                        GlauberChain::new(g, params, EdgeConfig::closed(g.n_edges()), plan.connectivity, plan.rule);
                    chain.run(burn_in, &mut rng);
                    let mut out = Vec::with_capacity(per_replica as usize);
                    for k in 0..per_replica {
                        if k > 0 {
                            chain.run(thin.max(1), &mut rng);
                        }
                        out.push(f(chain.config()));
                    }
                    Ok(out)
                }
            }
        })
        .collect();
    let mut out = Vec::with_capacity(plan.samples() as usize);
    for r in per_replica {
        out.extend(r?);
    }
    Ok(out)
}

/// Seed for grid point `j` of a run seeded with `seed`.
pub fn grid_seed(seed: u64, j: usize) -> u64 {
    let mut z = seed ^ (j as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Samples at every `β` of a grid, mapped through `f`; output is `[grid point][sample]`.
///
/// The Bernoulli sampler reuses one coupling sheet per replica across the
/// grid, so differences between neighbouring grid points are low-noise. The
/// other samplers draw each grid point independently under [`grid_seed`].
pub fn sample_grid<S, T, F>(g: &WeightedGraph<S>, q: S, betas: &[S], plan: &SamplingPlan, f: F) -> Result<Vec<Vec<T>>>
where
    S: Scalar,
    T: Send,
    F: Fn(&EdgeConfig) -> T + Sync,
{
    let params: Vec<ModelParams<S>> = betas.iter().map(|&b| ModelParams::new(b, q)).collect::<Result<_>>()?;
    if plan.kind != SamplerKind::Bernoulli {
        return params
            .iter()
            .enumerate()
            .map(|(j, p)| sample_map(g, p, &SamplingPlan { seed: grid_seed(plan.seed, j), ..*plan }, &f))
            .collect();
    }
    if q != S::one() {
        return Err(Error::Inapplicable(format!("Bernoulli sampler needs q = 1, got q = {q}")));
    }
    let rows: Vec<Vec<T>> = (0..plan.replicas)
        .into_par_iter()
        .map(|i| {
            let sheet = CouplingSheet::sample(g.n_edges(), &mut stream_rng(plan.seed, domain::EDGES, i));
            betas.iter().map(|&b| f(&sheet.config_at(g, b))).collect()
        })
        .collect();
    let mut out: Vec<Vec<T>> = betas.iter().map(|_| Vec::with_capacity(rows.len())).collect();
    for row in rows {
        for (col, x) in out.iter_mut().zip(row) {
            col.push(x);
        }
    }
    Ok(out)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TvReport {
    pub samples: u64,
    pub total_variation: f64,
    /// Bootstrap half-width at the requested confidence.
    pub half_width: f64,
    pub configurations: usize,
}

/// Total variation between `plan`'s empirical law and the enumerated measure.
pub fn validate_sampler<S: Scalar>(
    g: &WeightedGraph<S>,
    params: &ModelParams<S>,
    plan: &SamplingPlan,
    confidence: f64,
) -> Result<TvReport> {
    let exact = enumerate_measure(g, *params)?;
    let masks = sample_map(g, params, plan, |c| c.to_mask())?;
    let mut counts = vec![0u64; exact.n_configs()];
    for &m in &masks {
        counts[m as usize] += 1;
    }
    let oracle: Vec<f64> = exact.probabilities().iter().map(|p| p.as_f64()).collect();
    let n = masks.len() as u64;
    let tv = |c: &[u64]| 0.5 * c.iter().zip(&oracle).map(|(&k, &p)| (k as f64 / n as f64 - p).abs()).sum::<f64>();
    let total_variation = tv(&counts);
    let empirical: Vec<f64> = counts.iter().map(|&k| k as f64 / n as f64).collect();
    let mut rng = stream_rng(plan.seed, domain::BOOTSTRAP, 0);
    const RESAMPLES: usize = 200;
    let boot: Vec<f64> = (0..RESAMPLES).map(|_| tv(&multinomial(n, &empirical, &mut rng))).collect();
    let mean = boot.iter().sum::<f64>() / RESAMPLES as f64;
    let var = boot.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (RESAMPLES - 1) as f64;
    Ok(TvReport {
        samples: n,
        total_variation,
        half_width: two_sided_z(confidence) * var.sqrt(),
        configurations: exact.n_configs(),
    })
}

/// Multinomial draw by successive conditional binomials.
fn multinomial<R: Rng + ?Sized>(n: u64, probs: &[f64], rng: &mut R) -> Vec<u64> {
    let mut left = n;
    let mut mass = 1.0;
    let mut out = Vec::with_capacity(probs.len());
    for &p in probs {
        let k = if left == 0 || mass <= 0.0 {
            0
        } else {
            let frac = (p / mass).clamp(0.0, 1.0);
            Binomial::new(left, frac).expect("valid binomial").sample(rng)
        };
        out.push(k);
        left -= k;
        mass -= p;
    }
    // Rounding in `mass` can leave a few draws unassigned.
    if let Some(last) = out.iter_mut().rev().zip(probs.iter().rev()).find(|(_, &p)| p > 0.0) {
        *last.0 += left;
    }
    out
}

/// Size of the cluster of a fixed vertex in Bernoulli(p) percolation on the
/// complete graph `K_N`, sampled by exploration with binomial neighbour counts.
pub fn complete_graph_cluster_size<R: Rng + ?Sized>(n_vertices: usize, p: f64, rng: &mut R) -> usize {
    assert!(n_vertices >= 1 && (0.0..=1.0).contains(&p));
    let mut unvisited = (n_vertices - 1) as u64;
    let mut active = 1u64;
    let mut size = 1u64;
    while active > 0 && unvisited > 0 {
        let k = Binomial::new(unvisited, p).expect("valid binomial").sample(rng);
        unvisited -= k;
        size += k;
        active = active - 1 + k;
    }
    size as usize
}

/// Histogram of `|K_v|` on `K_N` at edge probability `p` over `samples` draws.
pub fn mean_field_histogram(n_vertices: usize, p: f64, samples: u64, seed: u64) -> Histogram {
    const CHUNKS: u64 = 64;
    let per = samples.div_ceil(CHUNKS);
    let parts: Vec<Histogram> = (0..CHUNKS)
        .into_par_iter()
        .map(|c| {
            let mut rng = stream_rng(seed, domain::MEAN_FIELD, c);
            let lo = c * per;
            let hi = ((c + 1) * per).min(samples);
            Histogram::from_samples((lo..hi).map(|_| complete_graph_cluster_size(n_vertices, p, &mut rng)))
        })
        .collect();
    parts.into_iter().fold(Histogram::new(), Histogram::merged)
}

/// Packs a configuration as a little-endian bitmap (edge 0 in the low bit of byte 0).
pub fn pack_config(omega: &EdgeConfig) -> Vec<u8> {
    let mut out = vec![0u8; omega.len().div_ceil(8)];
    for (i, &b) in omega.bits().iter().enumerate() {
        out[i / 8] |= (b as u8) << (i % 8);
    }
    out
}

pub fn unpack_config(bytes: &[u8], n_edges: usize) -> EdgeConfig {
    EdgeConfig::from_bits((0..n_edges).map(|i| bytes[i / 8] >> (i % 8) & 1 == 1).collect())
}

/// Appends one bitmap record to a raw sample stream.
pub fn write_sample_record<W: Write>(out: &mut W, omega: &EdgeConfig) -> std::io::Result<()> {
    out.write_all(&pack_config(omega))
}

/// Reads every record of a raw sample stream of `n_edges`-edge configurations.
pub fn read_sample_records<R: Read>(mut input: R, n_edges: usize) -> std::io::Result<Vec<EdgeConfig>> {
    let width = n_edges.div_ceil(8);
    let mut bytes = Vec::new();
    input.read_to_end(&mut bytes)?;
    if width == 0 || bytes.len() % width != 0 {
        return Err(std::io::Error::new(std::io::ErrorKind::InvalidData, "truncated sample record"));
    }
    Ok(bytes.chunks(width).map(|c| unpack_config(c, n_edges)).collect())
}
