//! Rate-1/2 LDPC code: construction, systematic encoding and
//! log-domain sum-product decoding.
//!
//! Codes are regular (3,6) graphs grown by progressive edge growth,
//! which keeps 4-cycles out whenever the degree constraints allow it.
//! The systematic encoder comes from Gaussian elimination over GF(2)
//! with recorded pivot columns. LLRs follow the repo-wide convention
//! `L = log P(bit=1) / P(bit=0)`.

use crate::denoisers::clamp_llr;
use crate::{Error, Result};
use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha12Rng;

const VAR_DEGREE: usize = 3;
const CONSTRUCT_ATTEMPTS: usize = 100;
const DECODER_CLAMP: f64 = 30.0;

/// Sparse parity-check matrix with encoder data for a systematic
/// rate-1/2 code.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LdpcCode {
    n: usize,
    k: usize,
    check_to_var: Vec<Vec<usize>>,
    var_to_check: Vec<Vec<usize>>,
    /// Parity (pivot) column of each eliminated row.
    pivot_cols: Vec<usize>,
    /// Systematic (information) columns in ascending order.
    info_cols: Vec<usize>,
    /// For each pivot row, the indices into `info_cols` whose bits are
    /// XORed to produce that parity bit.
    parity_eqs: Vec<Vec<usize>>,
    seed: u64,
}

/// Soft decoding outcome.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodeResult {
    /// `posterior_llr - channel_llr`, the decoder's own contribution.
    pub extrinsic_llr: Vec<f64>,
    pub posterior_llr: Vec<f64>,
    /// Hard decisions, positive LLR mapping to bit 1.
    pub hard_bits: Vec<u8>,
    /// Whether the hard decisions satisfy every parity check.
    pub parity_ok: bool,
    pub iters_used: usize,
}

impl LdpcCode {
    /// Build a regular (3,6) code of block length `n` by progressive
    /// edge growth, deterministic in `seed`. Rebuilds with perturbed
    /// tie-breaking when the parity matrix turns out rank-deficient.
    pub fn construct(n: usize, rate: f64, seed: u64) -> Result<Self> {
        if n % 2 != 0 || n < 2 * VAR_DEGREE {
            return Err(Error::InvalidDimension(format!(
                "block length {n} must be even and at least {}",
                2 * VAR_DEGREE
            )));
        }
        if (rate - 0.5).abs() > 1e-12 {
            return Err(Error::InvalidDimension(format!(
                "only rate 1/2 is supported, got {rate}"
            )));
        }
        // Girth 6 requires n C(3,2) <= C(n/2, 2) pair slots; the repair
        // pass needs some headroom beyond that bound to terminate.
        let girth_feasible = n >= 64;
        for attempt in 0..CONSTRUCT_ATTEMPTS {
            let mut rng = ChaCha12Rng::seed_from_u64(seed.wrapping_add(attempt as u64));
            if let Some(mut graph) = peg_graph(n, &mut rng) {
                let clean = repair_four_cycles(&mut graph, n);
                if girth_feasible && !clean {
                    continue;
                }
                if let Some(code) = Self::from_graph(n, graph, seed) {
                    return Ok(code);
                }
            }
        }
        Err(Error::CodeConstruction(CONSTRUCT_ATTEMPTS))
    }

    fn from_graph(n: usize, mut check_to_var: Vec<Vec<usize>>, seed: u64) -> Option<Self> {
        let m = check_to_var.len();
        for list in check_to_var.iter_mut() {
            list.sort_unstable();
        }
        let mut var_to_check = vec![Vec::new(); n];
        for (c, vars) in check_to_var.iter().enumerate() {
            for &v in vars {
                var_to_check[v].push(c);
            }
        }
        for list in var_to_check.iter_mut() {
            list.sort_unstable();
        }

        // Dense GF(2) elimination, rows as u64 limbs.
        let limbs = n.div_ceil(64);
        let mut rows = vec![vec![0u64; limbs]; m];
        for (c, vars) in check_to_var.iter().enumerate() {
            for &v in vars {
                rows[c][v / 64] |= 1 << (v % 64);
            }
        }
        let mut pivot_cols = Vec::with_capacity(m);
        let mut rank = 0usize;
        for col in 0..n {
            let (limb, bit) = (col / 64, col % 64);
            let pivot = (rank..m).find(|&r| rows[r][limb] >> bit & 1 == 1);
            let Some(pivot) = pivot else { continue };
            rows.swap(rank, pivot);
            for r in 0..m {
                if r != rank && rows[r][limb] >> bit & 1 == 1 {
                    for l in 0..limbs {
                        let src = rows[rank][l];
                        rows[r][l] ^= src;
                    }
                }
            }
            pivot_cols.push(col);
            rank += 1;
            if rank == m {
                break;
            }
        }
        if rank < m {
            return None;
        }

        let pivot_set: Vec<bool> = {
            let mut s = vec![false; n];
            for &c in &pivot_cols {
                s[c] = true;
            }
            s
        };
        let info_cols: Vec<usize> = (0..n).filter(|&c| !pivot_set[c]).collect();
        let info_pos: Vec<usize> = {
            let mut pos = vec![usize::MAX; n];
            for (j, &c) in info_cols.iter().enumerate() {
                pos[c] = j;
            }
            pos
        };
        let parity_eqs = rows
            .iter()
            .map(|row| {
                info_cols
                    .iter()
                    .filter(|&&c| row[c / 64] >> (c % 64) & 1 == 1)
                    .map(|&c| info_pos[c])
                    .collect()
            })
            .collect();

        Some(LdpcCode {
            n,
            k: n - m,
            check_to_var,
            var_to_check,
            pivot_cols,
            info_cols,
            parity_eqs,
            seed,
        })
    }

    pub fn codeword_len(&self) -> usize {
        self.n
    }

    pub fn info_len(&self) -> usize {
        self.k
    }

    pub fn n_checks(&self) -> usize {
        self.check_to_var.len()
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn check_neighbors(&self, c: usize) -> &[usize] {
        &self.check_to_var[c]
    }

    pub fn var_neighbors(&self, v: usize) -> &[usize] {
        &self.var_to_check[v]
    }

    /// Systematic encoding: information bits land on the non-pivot
    /// columns, parity bits complete every check equation.
    pub fn encode(&self, info_bits: &[u8]) -> Result<Vec<u8>> {
        if info_bits.len() != self.k {
            return Err(Error::InvalidDimension(format!(
                "info length {} != k = {}",
                info_bits.len(),
                self.k
            )));
        }
        let mut cw = vec![0u8; self.n];
        for (j, &col) in self.info_cols.iter().enumerate() {
            cw[col] = info_bits[j] & 1;
        }
        for (i, eq) in self.parity_eqs.iter().enumerate() {
            let mut p = 0u8;
            for &j in eq {
                p ^= info_bits[j] & 1;
            }
            cw[self.pivot_cols[i]] = p;
        }
        Ok(cw)
    }

    /// Extract the information bits from a systematic codeword.
    pub fn extract_info(&self, codeword: &[u8]) -> Vec<u8> {
        self.info_cols.iter().map(|&c| codeword[c] & 1).collect()
    }

    /// `H c = 0` over GF(2)?
    pub fn is_codeword(&self, bits: &[u8]) -> bool {
        self.check_to_var.iter().all(|vars| {
            vars.iter().fold(0u8, |acc, &v| acc ^ (bits[v] & 1)) == 0
        })
    }

    /// Flooding-schedule log-domain sum-product decoding with the exact
    /// check-node rule, early exit on parity satisfaction.
    pub fn decode_spa(&self, channel_llr: &[f64], max_iters: usize) -> Result<DecodeResult> {
        if channel_llr.len() != self.n {
            return Err(Error::InvalidDimension(format!(
                "LLR length {} != n = {}",
                channel_llr.len(),
                self.n
            )));
        }
        // Work internally with lambda = log P(0)/P(1), the classical
        // sign convention of the tanh rule; negate on entry and exit.
        let lam_ch: Vec<f64> = channel_llr
            .iter()
            .map(|&l| -clamp_llr(l, DECODER_CLAMP))
            .collect();

        let num_edges: usize = self.var_to_check.iter().map(Vec::len).sum();
        let mut var_edge_start = Vec::with_capacity(self.n + 1);
        var_edge_start.push(0usize);
        for v in 0..self.n {
            var_edge_start.push(var_edge_start[v] + self.var_to_check[v].len());
        }
        let check_edges: Vec<Vec<usize>> = self
            .check_to_var
            .iter()
            .enumerate()
            .map(|(c, vars)| {
                vars.iter()
                    .map(|&v| {
                        let pos = self.var_to_check[v]
                            .iter()
                            .position(|&cc| cc == c)
                            .expect("inconsistent adjacency");
                        var_edge_start[v] + pos
                    })
                    .collect()
            })
            .collect();

        let mut var_to_check_msg = vec![0.0f64; num_edges];
        let mut check_to_var_msg = vec![0.0f64; num_edges];
        for v in 0..self.n {
            for e in var_edge_start[v]..var_edge_start[v + 1] {
                var_to_check_msg[e] = lam_ch[v];
            }
        }

        let mut posterior_lam = lam_ch.clone();
        let mut hard = vec![0u8; self.n];
        let mut iters_used = 0;
        let mut parity_ok = false;

        for iter in 1..=max_iters {
            iters_used = iter;
            for edges in &check_edges {
                // tanh product with self-exclusion by division-free
                // two-pass (track product and recompute per edge).
                let tanhs: Vec<f64> = edges
                    .iter()
                    .map(|&e| (var_to_check_msg[e] * 0.5).tanh())
                    .collect();
                for (i, &e) in edges.iter().enumerate() {
                    let mut prod = 1.0f64;
                    for (j, &t) in tanhs.iter().enumerate() {
                        if j != i {
                            prod *= t;
                        }
                    }
                    let prod = prod.clamp(-(1.0 - 1e-15), 1.0 - 1e-15);
                    check_to_var_msg[e] = clamp_llr(2.0 * prod.atanh(), DECODER_CLAMP);
                }
            }

            for v in 0..self.n {
                let (start, end) = (var_edge_start[v], var_edge_start[v + 1]);
                let mut total = lam_ch[v];
                for e in start..end {
                    total += check_to_var_msg[e];
                }
                posterior_lam[v] = total;
                hard[v] = if total < 0.0 { 1 } else { 0 };
                for e in start..end {
                    var_to_check_msg[e] = clamp_llr(total - check_to_var_msg[e], DECODER_CLAMP);
                }
            }

            if self.is_codeword(&hard) {
                parity_ok = true;
                break;
            }
        }

        let posterior_llr: Vec<f64> = posterior_lam.iter().map(|&l| -l).collect();
        let channel_clamped: Vec<f64> = lam_ch.iter().map(|&l| -l).collect();
        let extrinsic_llr: Vec<f64> = posterior_llr
            .iter()
            .zip(&channel_clamped)
            .map(|(&p, &c)| p - c)
            .collect();
        Ok(DecodeResult {
            extrinsic_llr,
            posterior_llr,
            hard_bits: hard,
            parity_ok,
            iters_used,
        })
    }

    // -----------------------------------------------------------------------
    // alist import/export
    // -----------------------------------------------------------------------

    /// Serialize the parity-check matrix in MacKay's alist text format
    /// (1-based indices, zero-padded rows).
    pub fn to_alist(&self) -> String {
        let m = self.n_checks();
        let dv_max = self.var_to_check.iter().map(Vec::len).max().unwrap_or(0);
        let dc_max = self.check_to_var.iter().map(Vec::len).max().unwrap_or(0);
        let mut out = String::new();
        out.push_str(&format!("{} {}\n{} {}\n", self.n, m, dv_max, dc_max));
        let degs = |lists: &[Vec<usize>]| {
            lists
                .iter()
                .map(|l| l.len().to_string())
                .collect::<Vec<_>>()
                .join(" ")
        };
        out.push_str(&degs(&self.var_to_check));
        out.push('\n');
        out.push_str(&degs(&self.check_to_var));
        out.push('\n');
        let padded = |list: &Vec<usize>, width: usize| {
            let mut items: Vec<String> = list.iter().map(|&i| (i + 1).to_string()).collect();
            items.resize(width, "0".to_string());
            items.join(" ")
        };
        for list in &self.var_to_check {
            out.push_str(&padded(list, dv_max));
            out.push('\n');
        }
        for list in &self.check_to_var {
            out.push_str(&padded(list, dc_max));
            out.push('\n');
        }
        out
    }

    /// Parse an alist file and rebuild the encoder by elimination.
    /// Fails on rank-deficient parity matrices.
    pub fn from_alist(text: &str) -> Result<Self> {
        let mut nums = text
            .split_whitespace()
            .map(|t| t.parse::<i64>().map_err(|_| Error::Malformed(format!("bad token `{t}`"))));
        let mut next = |what: &str| -> Result<i64> {
            nums.next()
                .ok_or_else(|| Error::Malformed(format!("alist truncated at {what}")))?
        };
        let n = next("n")? as usize;
        let m = next("m")? as usize;
        let dv_max = next("dv_max")? as usize;
        let dc_max = next("dc_max")? as usize;
        let mut var_deg = vec![0usize; n];
        for d in var_deg.iter_mut() {
            *d = next("var degree")? as usize;
        }
        let mut check_deg = vec![0usize; m];
        for d in check_deg.iter_mut() {
            *d = next("check degree")? as usize;
        }
        let mut check_to_var = vec![Vec::new(); m];
        for (v, &d) in var_deg.iter().enumerate() {
            let mut seen = 0usize;
            for _ in 0..dv_max {
                let idx = next("var adjacency")?;
                if idx > 0 {
                    let c = idx as usize - 1;
                    if c >= m {
                        return Err(Error::Malformed(format!("check index {idx} out of range")));
                    }
                    check_to_var[c].push(v);
                    seen += 1;
                }
            }
            if seen != d {
                return Err(Error::Malformed(format!(
                    "variable {v}: declared degree {d}, found {seen}"
                )));
            }
        }
        // The row adjacency block is redundant; consume and cross-check.
        for (c, &d) in check_deg.iter().enumerate() {
            let mut seen = 0usize;
            for _ in 0..dc_max {
                let idx = next("check adjacency")?;
                if idx > 0 {
                    seen += 1;
                }
            }
            if seen != d || check_to_var[c].len() != d {
                return Err(Error::Malformed(format!(
                    "check {c}: inconsistent degree (declared {d})"
                )));
            }
        }
        for list in check_to_var.iter_mut() {
            list.sort_unstable();
        }
        LdpcCode::from_graph(n, check_to_var, 0)
            .ok_or_else(|| Error::Malformed("rank-deficient parity matrix".into()))
    }
}

/// Grow a (3,6)-regular Tanner graph by progressive edge growth:
/// each new edge reaches the check node farthest from the variable in
/// the current graph, preferring unreached checks, breaking ties by
/// lowest degree and then uniformly at random.
fn peg_graph(n: usize, rng: &mut impl Rng) -> Option<Vec<Vec<usize>>> {
    let m = n / 2;
    let dc_max = 2 * VAR_DEGREE;
    let mut check_to_var: Vec<Vec<usize>> = vec![Vec::new(); m];
    let mut var_to_check: Vec<Vec<usize>> = vec![Vec::new(); n];

    for v in 0..n {
        for edge in 0..VAR_DEGREE {
            let candidate = if edge == 0 {
                pick_min_degree(&check_to_var, dc_max, None, rng)
            } else {
                let dist = check_distances(v, &var_to_check, &check_to_var);
                let eligible: Vec<usize> = (0..m)
                    .filter(|&c| check_to_var[c].len() < dc_max && !var_to_check[v].contains(&c))
                    .collect();
                if eligible.is_empty() {
                    return None;
                }
                let unreached: Vec<usize> = eligible
                    .iter()
                    .copied()
                    .filter(|&c| dist[c] == usize::MAX)
                    .collect();
                let pool = if !unreached.is_empty() {
                    unreached
                } else {
                    let far = eligible.iter().map(|&c| dist[c]).max().unwrap();
                    eligible.into_iter().filter(|&c| dist[c] == far).collect()
                };
                pick_min_degree(&check_to_var, dc_max, Some(&pool), rng)
            }?;
            check_to_var[candidate].push(v);
            var_to_check[v].push(candidate);
        }
    }
    Some(check_to_var)
}

fn pick_min_degree(
    check_to_var: &[Vec<usize>],
    dc_max: usize,
    pool: Option<&[usize]>,
    rng: &mut impl Rng,
) -> Option<usize> {
    let candidates: Vec<usize> = match pool {
        Some(p) => p.to_vec(),
        None => (0..check_to_var.len())
            .filter(|&c| check_to_var[c].len() < dc_max)
            .collect(),
    };
    let min_deg = candidates.iter().map(|&c| check_to_var[c].len()).min()?;
    let best: Vec<usize> = candidates
        .into_iter()
        .filter(|&c| check_to_var[c].len() == min_deg)
        .collect();
    Some(best[rng.gen_range(0..best.len())])
}

fn shared_vars(a: &[usize], b: &[usize]) -> usize {
    // Both lists are short; sortedness is not guaranteed mid-repair.
    a.iter().filter(|v| b.contains(v)).count()
}

/// Number of 4-cycles a given check participates in: pairs of shared
/// variables with every other check.
fn cycles_at_check(check_to_var: &[Vec<usize>], c: usize) -> usize {
    (0..check_to_var.len())
        .filter(|&d| d != c)
        .map(|d| {
            let s = shared_vars(&check_to_var[c], &check_to_var[d]);
            s.saturating_sub(1) * s / 2
        })
        .sum()
}

fn total_four_cycles(check_to_var: &[Vec<usize>]) -> usize {
    (0..check_to_var.len())
        .map(|c| cycles_at_check(check_to_var, c))
        .sum::<usize>()
        / 2
}

/// Greedy girth repair: swap the variable ends of two edges whenever
/// that strictly reduces the global 4-cycle count. Degree sequences
/// are preserved. Returns whether the graph ended 4-cycle-free.
fn repair_four_cycles(check_to_var: &mut [Vec<usize>], n: usize) -> bool {
    let m = check_to_var.len();
    'rounds: for _ in 0..(4 * n) {
        // Locate one offending (check, var) edge.
        let mut offending: Option<(usize, usize)> = None;
        'search: for a in 0..m {
            for b in (a + 1)..m {
                let shared: Vec<usize> = check_to_var[a]
                    .iter()
                    .copied()
                    .filter(|v| check_to_var[b].contains(v))
                    .collect();
                if shared.len() >= 2 {
                    offending = Some((b, shared[1]));
                    break 'search;
                }
            }
        }
        let Some((c_bad, v_bad)) = offending else {
            return true;
        };

        // Try swapping with every other edge until the cycle count drops.
        for c_other in 0..m {
            if c_other == c_bad {
                continue;
            }
            for vi in 0..check_to_var[c_other].len() {
                let v_other = check_to_var[c_other][vi];
                if v_other == v_bad
                    || check_to_var[c_bad].contains(&v_other)
                    || check_to_var[c_other].contains(&v_bad)
                {
                    continue;
                }
                let local_before =
                    cycles_at_check(check_to_var, c_bad) + cycles_at_check(check_to_var, c_other)
                        - pair_cycles(check_to_var, c_bad, c_other);
                swap_edge(check_to_var, c_bad, v_bad, c_other, v_other);
                let local_after =
                    cycles_at_check(check_to_var, c_bad) + cycles_at_check(check_to_var, c_other)
                        - pair_cycles(check_to_var, c_bad, c_other);
                if local_after < local_before {
                    continue 'rounds;
                }
                // Revert.
                swap_edge(check_to_var, c_bad, v_other, c_other, v_bad);
            }
        }
        // No improving swap for this offender.
        return false;
    }
    total_four_cycles(check_to_var) == 0
}

fn pair_cycles(check_to_var: &[Vec<usize>], a: usize, b: usize) -> usize {
    let s = shared_vars(&check_to_var[a], &check_to_var[b]);
    s.saturating_sub(1) * s / 2
}

/// Move `v_bad` from `c_bad` to `c_other` and `v_other` the other way.
fn swap_edge(
    check_to_var: &mut [Vec<usize>],
    c_bad: usize,
    v_bad: usize,
    c_other: usize,
    v_other: usize,
) {
    let pos = check_to_var[c_bad]
        .iter()
        .position(|&v| v == v_bad)
        .expect("edge to swap");
    check_to_var[c_bad][pos] = v_other;
    let pos = check_to_var[c_other]
        .iter()
        .position(|&v| v == v_other)
        .expect("edge to swap");
    check_to_var[c_other][pos] = v_bad;
}

/// BFS distances from variable `v` to every check node in the partial
/// bipartite graph; `usize::MAX` marks unreached checks.
fn check_distances(
    v: usize,
    var_to_check: &[Vec<usize>],
    check_to_var: &[Vec<usize>],
) -> Vec<usize> {
    let mut var_dist = vec![usize::MAX; var_to_check.len()];
    let mut chk_dist = vec![usize::MAX; check_to_var.len()];
    var_dist[v] = 0;
    let mut frontier = vec![v];
    let mut depth = 0usize;
    while !frontier.is_empty() {
        let mut next_checks = Vec::new();
        for &vv in &frontier {
            for &c in &var_to_check[vv] {
                if chk_dist[c] == usize::MAX {
                    chk_dist[c] = depth + 1;
                    next_checks.push(c);
                }
            }
        }
        let mut next_vars = Vec::new();
        for &c in &next_checks {
            for &vv in &check_to_var[c] {
                if var_dist[vv] == usize::MAX {
                    var_dist[vv] = depth + 2;
                    next_vars.push(vv);
                }
            }
        }
        frontier = next_vars;
        depth += 2;
    }
    chk_dist
}
