//! Irregular LDPC codes built by progressive edge growth, with a systematic
//! GF(2) encoder and a sum-product decoder working on LLRs.

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::CodecError;
use crate::{clamp_llr, LLR_MAX};

/// Node-perspective degree distribution: fraction of nodes having each degree.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DegreeProfile {
    pub fractions: Vec<(usize, f64)>,
}

impl DegreeProfile {
    /// Variable-node profile `0.0005 + 0.2852X + 0.2857X² + 0.4286X³`,
    /// where the term `X^t` counts nodes of degree `t + 1`.
    pub fn paper_variable() -> Self {
        DegreeProfile {
            fractions: vec![(1, 0.0005), (2, 0.2852), (3, 0.2857), (4, 0.4286)],
        }
    }

    /// Check-node profile `0.0017X⁹ + 0.9983X¹⁰` (degrees 10 and 11).
    pub fn paper_check() -> Self {
        DegreeProfile {
            fractions: vec![(10, 0.0017), (11, 0.9983)],
        }
    }

    /// Largest-remainder apportionment of `count` nodes over the degrees.
    fn apportion(&self, count: usize) -> Vec<(usize, usize)> {
        let total: f64 = self.fractions.iter().map(|f| f.1).sum();
        let mut alloc: Vec<(usize, usize, f64)> = self
            .fractions
            .iter()
            .map(|&(d, f)| {
                let exact = f / total * count as f64;
                (d, exact.floor() as usize, exact - exact.floor())
            })
            .collect();
        let assigned: usize = alloc.iter().map(|a| a.1).sum();
        let mut order: Vec<usize> = (0..alloc.len()).collect();
        order.sort_by(|&a, &b| alloc[b].2.total_cmp(&alloc[a].2).then(a.cmp(&b)));
        for &i in order.iter().take(count - assigned) {
            alloc[i].1 += 1;
        }
        let mut out: Vec<(usize, usize)> = alloc.into_iter().map(|(d, c, _)| (d, c)).collect();
        out.sort();
        out
    }
}

/// Result of one decoder run.
#[derive(Debug, Clone)]
pub struct DecodeOutput {
    /// Posterior minus channel LLR per coded bit.
    pub extrinsic: Vec<f64>,
    /// Posterior LLR per coded bit.
    pub posterior: Vec<f64>,
    pub hard: Vec<u8>,
    pub syndrome_ok: bool,
    pub iterations: usize,
}

/// A binary LDPC code given by its sparse parity-check matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct LdpcCode {
    n: usize,
    /// Variable indices of every check.
    checks: Vec<Vec<usize>>,
    /// Check indices of every variable.
    vars: Vec<Vec<usize>>,
    /// Columns carrying information bits, in order.
    info_cols: Vec<usize>,
    /// Column of the parity bit solved by each reduced row.
    parity_cols: Vec<usize>,
    /// Reduced rows restricted to the information columns, as bit sets.
    parity_rows: Vec<Vec<u64>>,
}

/// Serialised form: the check lists are enough to rebuild everything else.
#[derive(Serialize, Deserialize)]
struct LdpcRepr {
    n: usize,
    checks: Vec<Vec<usize>>,
}

impl Serialize for LdpcCode {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        LdpcRepr {
            n: self.n,
            checks: self.checks.clone(),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for LdpcCode {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let repr = LdpcRepr::deserialize(d)?;
        LdpcCode::from_checks(repr.n, repr.checks).map_err(serde::de::Error::custom)
    }
}

impl LdpcCode {
    /// Builds a code from explicit check lists. Fails when the checks are not
    /// linearly independent.
    pub fn from_checks(n: usize, checks: Vec<Vec<usize>>) -> Result<Self, CodecError> {
        let m = checks.len();
        let mut vars = vec![Vec::new(); n];
        for (c, row) in checks.iter().enumerate() {
            for &v in row {
                if v >= n {
                    return Err(CodecError::Profile(format!("check {c} touches bit {v} >= {n}")));
                }
                vars[v].push(c);
            }
        }

        // Reduce H over GF(2); pivots are searched from the last column so the
        // parity bits tend to sit at the end of the codeword.
        let words = n.div_ceil(64);
        let mut rows: Vec<Vec<u64>> = checks
            .iter()
            .map(|row| {
                let mut bits = vec![0u64; words];
                for &v in row {
                    bits[v / 64] ^= 1 << (v % 64);
                }
                bits
            })
            .collect();
        let mut pivot_of_row = Vec::with_capacity(m);
        let mut r = 0;
        for col in (0..n).rev() {
            if r == m {
                break;
            }
            let (w, bit) = (col / 64, 1u64 << (col % 64));
            let Some(p) = (r..m).find(|&i| rows[i][w] & bit != 0) else {
                continue;
            };
            rows.swap(r, p);
            let pivot_row = rows[r].clone();
            for (i, row) in rows.iter_mut().enumerate() {
                if i != r && row[w] & bit != 0 {
                    for (a, b) in row.iter_mut().zip(&pivot_row) {
                        *a ^= b;
                    }
                }
            }
            pivot_of_row.push(col);
            r += 1;
        }
        if r < m {
            return Err(CodecError::RankDeficient { rank: r, checks: m });
        }

        let mut is_pivot = vec![false; n];
        for &c in &pivot_of_row {
            is_pivot[c] = true;
        }
        let info_cols: Vec<usize> = (0..n).filter(|&c| !is_pivot[c]).collect();
        let k = info_cols.len();
        let parity_rows = rows
            .iter()
            .map(|row| {
                let mut bits = vec![0u64; k.div_ceil(64)];
                for (i, &c) in info_cols.iter().enumerate() {
                    if row[c / 64] >> (c % 64) & 1 == 1 {
                        bits[i / 64] |= 1 << (i % 64);
                    }
                }
                bits
            })
            .collect();

        Ok(LdpcCode {
            n,
            checks,
            vars,
            info_cols,
            parity_cols: pivot_of_row,
            parity_rows,
        })
    }

    /// Progressive-edge-growth construction for the given node-perspective
    /// degree profiles and design rate `1 - m/n`.
    pub fn peg(
        n: usize,
        m: usize,
        var_profile: &DegreeProfile,
        check_profile: &DegreeProfile,
        seed: u64,
    ) -> Result<Self, CodecError> {
        if m == 0 || m >= n {
            return Err(CodecError::Profile(format!("need 0 < m < n, got m={m}, n={n}")));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut var_deg: Vec<usize> = var_profile
            .apportion(n)
            .into_iter()
            .flat_map(|(d, c)| std::iter::repeat_n(d, c))
            .collect();
        let edges: usize = var_deg.iter().sum();
        let mut check_deg = balance_check_degrees(check_profile.apportion(m), edges)?;
        if var_deg.iter().any(|&d| d > m) {
            return Err(CodecError::Profile("variable degree exceeds check count".into()));
        }
        var_deg.shuffle(&mut rng);
        check_deg.shuffle(&mut rng);

        let mut var_adj: Vec<Vec<usize>> = vec![Vec::new(); n];
        let mut chk_adj: Vec<Vec<usize>> = vec![Vec::new(); m];
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by_key(|&v| var_deg[v]);

        let mut seen = vec![false; m];
        for &v in &order {
            for e in 0..var_deg[v] {
                let candidates: Vec<usize> = if e == 0 {
                    (0..m).filter(|&c| chk_adj[c].len() < check_deg[c]).collect()
                } else {
                    farthest_checks(v, &var_adj, &chk_adj, &mut seen)
                        .into_iter()
                        .filter(|&c| chk_adj[c].len() < check_deg[c])
                        .collect()
                };
                let candidates = if candidates.is_empty() {
                    let open: Vec<usize> = (0..m)
                        .filter(|&c| chk_adj[c].len() < check_deg[c] && !var_adj[v].contains(&c))
                        .collect();
                    if open.is_empty() {
                        (0..m).filter(|c| !var_adj[v].contains(c)).collect()
                    } else {
                        open
                    }
                } else {
                    candidates
                };
                let min_deg = candidates.iter().map(|&c| chk_adj[c].len()).min().unwrap();
                let ties: Vec<usize> = candidates
                    .into_iter()
                    .filter(|&c| chk_adj[c].len() == min_deg)
                    .collect();
                let c = ties[rng.random_range(0..ties.len())];
                var_adj[v].push(c);
                chk_adj[c].push(v);
            }
        }
        for row in &mut chk_adj {
            row.sort_unstable();
        }
        LdpcCode::from_checks(n, chk_adj)
    }

    /// Rate-5/7 code with the reference degree profiles. Tries successive
    /// seeds until the parity-check matrix has full rank.
    pub fn paper_default(n: usize, seed: u64) -> Result<Self, CodecError> {
        let m = (2 * n).div_ceil(7);
        let mut last = None;
        for attempt in 0..16u64 {
            match LdpcCode::peg(
                n,
                m,
                &DegreeProfile::paper_variable(),
                &DegreeProfile::paper_check(),
                seed.wrapping_add(attempt),
            ) {
                Ok(code) => return Ok(code),
                Err(e @ CodecError::RankDeficient { .. }) => last = Some(e),
                Err(e) => return Err(e),
            }
        }
        Err(last.unwrap())
    }

    pub fn len(&self) -> usize {
        self.n
    }

    pub fn is_empty(&self) -> bool {
        self.n == 0
    }

    pub fn info_len(&self) -> usize {
        self.info_cols.len()
    }

    pub fn check_count(&self) -> usize {
        self.checks.len()
    }

    pub fn rate(&self) -> f64 {
        self.info_len() as f64 / self.n as f64
    }

    pub fn checks(&self) -> &[Vec<usize>] {
        &self.checks
    }

    pub fn variable_degrees(&self) -> Vec<usize> {
        self.vars.iter().map(Vec::len).collect()
    }

    pub fn check_degrees(&self) -> Vec<usize> {
        self.checks.iter().map(Vec::len).collect()
    }

    pub fn encode(&self, info: &[u8]) -> Result<Vec<u8>, CodecError> {
        let k = self.info_len();
        if info.len() != k {
            return Err(CodecError::InfoLength {
                got: info.len(),
                expected: k,
            });
        }
        let mut packed = vec![0u64; k.div_ceil(64)];
        for (i, &b) in info.iter().enumerate() {
            if b & 1 == 1 {
                packed[i / 64] |= 1 << (i % 64);
            }
        }
        let mut cw = vec![0u8; self.n];
        for (&c, &b) in self.info_cols.iter().zip(info) {
            cw[c] = b & 1;
        }
        for (row, &col) in self.parity_rows.iter().zip(&self.parity_cols) {
            let ones: u32 = row.iter().zip(&packed).map(|(a, b)| (a & b).count_ones()).sum();
            cw[col] = (ones & 1) as u8;
        }
        Ok(cw)
    }

    /// Information bits of a codeword (or of a hard decision).
    pub fn info_bits(&self, codeword: &[u8]) -> Vec<u8> {
        self.info_cols.iter().map(|&c| codeword[c]).collect()
    }

    pub fn syndrome_ok(&self, bits: &[u8]) -> bool {
        self.checks
            .iter()
            .all(|row| row.iter().fold(0u8, |acc, &v| acc ^ bits[v]) == 0)
    }

    /// Sum-product decoding in the LLR domain (`LLR = ln P(0)/P(1)`).
    ///
    /// Runs at least one iteration and stops early once every check is
    /// satisfied. Extrinsic output is the posterior minus the channel input.
    pub fn decode_bp(&self, channel: &[f64], max_iters: usize) -> DecodeOutput {
        assert_eq!(channel.len(), self.n, "LLR frame length");
        let input: Vec<f64> = channel.iter().map(|&l| clamp_llr(l)).collect();
        let edge_count: usize = self.checks.iter().map(Vec::len).sum();
        // Edges are numbered check by check.
        let mut var_edges: Vec<Vec<usize>> = vec![Vec::new(); self.n];
        let mut edge_var = Vec::with_capacity(edge_count);
        for row in &self.checks {
            for &v in row {
                var_edges[v].push(edge_var.len());
                edge_var.push(v);
            }
        }
        let mut q: Vec<f64> = edge_var.iter().map(|&v| input[v]).collect();
        let mut r = vec![0.0; edge_count];
        let mut posterior = input.clone();
        let mut hard = vec![0u8; self.n];
        let mut syndrome_ok = false;
        let mut iterations = 0;
        let limit = (1.0 - 1e-15f64).atanh();
        let mut prefix = Vec::new();

        for _ in 0..max_iters.max(1) {
            iterations += 1;
            let mut e0 = 0;
            for row in &self.checks {
                let deg = row.len();
                let t: Vec<f64> = (e0..e0 + deg).map(|e| (q[e] / 2.0).tanh()).collect();
                prefix.clear();
                prefix.push(1.0);
                for &x in &t {
                    let last = *prefix.last().unwrap();
                    prefix.push(last * x);
                }
                let mut suffix = 1.0;
                for i in (0..deg).rev() {
                    let prod: f64 = prefix[i] * suffix;
                    let a = prod.clamp(-1.0, 1.0).atanh().clamp(-limit, limit);
                    r[e0 + i] = (2.0 * a).clamp(-LLR_MAX, LLR_MAX);
                    suffix *= t[i];
                }
                e0 += deg;
            }
            for v in 0..self.n {
                let total = input[v] + var_edges[v].iter().map(|&e| r[e]).sum::<f64>();
                posterior[v] = total;
                hard[v] = u8::from(total < 0.0);
                for &e in &var_edges[v] {
                    q[e] = clamp_llr(total - r[e]);
                }
            }
            if self.syndrome_ok(&hard) {
                syndrome_ok = true;
                break;
            }
        }

        let extrinsic = posterior
            .iter()
            .zip(&input)
            .map(|(p, l)| clamp_llr(p - l))
            .collect();
        DecodeOutput {
            extrinsic,
            posterior,
            hard,
            syndrome_ok,
            iterations,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("code serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

/// Adjusts an apportioned check-degree allocation so the edge counts match.
fn balance_check_degrees(
    mut alloc: Vec<(usize, usize)>,
    edges: usize,
) -> Result<Vec<usize>, CodecError> {
    let sum = |a: &[(usize, usize)]| a.iter().map(|(d, c)| d * c).sum::<usize>();
    let mut guard = 0;
    while sum(&alloc) != edges {
        guard += 1;
        if guard > 100_000 {
            return Err(CodecError::Profile("cannot balance check degrees".into()));
        }
        let s = sum(&alloc);
        if s > edges {
            // lower one node from the highest populated degree
            let Some(t) = (1..alloc.len()).rev().find(|&t| alloc[t].1 > 0) else {
                return Err(CodecError::Profile("check degrees too large".into()));
            };
            if alloc[t].0 - alloc[t - 1].0 > s - edges {
                return Err(CodecError::Profile("non-consecutive check degrees".into()));
            }
            alloc[t].1 -= 1;
            alloc[t - 1].1 += 1;
        } else {
            let Some(t) = (0..alloc.len() - 1).find(|&t| alloc[t].1 > 0) else {
                return Err(CodecError::Profile("check degrees too small".into()));
            };
            if alloc[t + 1].0 - alloc[t].0 > edges - s {
                return Err(CodecError::Profile("non-consecutive check degrees".into()));
            }
            alloc[t].1 -= 1;
            alloc[t + 1].1 += 1;
        }
    }
    Ok(alloc
        .into_iter()
        .flat_map(|(d, c)| std::iter::repeat_n(d, c))
        .collect())
}

/// Checks reached last (or never) by a breadth-first expansion from `v`.
fn farthest_checks(
    v: usize,
    var_adj: &[Vec<usize>],
    chk_adj: &[Vec<usize>],
    seen: &mut [bool],
) -> Vec<usize> {
    let m = seen.len();
    seen.iter_mut().for_each(|s| *s = false);
    let mut frontier: Vec<usize> = var_adj[v].clone();
    for &c in &frontier {
        seen[c] = true;
    }
    let mut covered = frontier.len();
    loop {
        let mut next = Vec::new();
        for &c in &frontier {
            for &u in &chk_adj[c] {
                for &c2 in &var_adj[u] {
                    if !seen[c2] {
                        seen[c2] = true;
                        next.push(c2);
                    }
                }
            }
        }
        if next.is_empty() {
            return (0..m).filter(|&c| !seen[c]).collect();
        }
        covered += next.len();
        if covered == m {
            return next;
        }
        frontier = next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn small_code() -> LdpcCode {
        LdpcCode::paper_default(210, 3).unwrap()
    }

    #[test]
    fn paper_rate_and_degrees() {
        let code = LdpcCode::paper_default(1008, 1).unwrap();
        assert_eq!(code.len(), 1008);
        assert_eq!(code.info_len(), 720);
        assert!((code.rate() - 5.0 / 7.0).abs() < 0.01);
        for d in code.variable_degrees() {
            assert!((1..=4).contains(&d), "{d}");
        }
        for d in code.check_degrees() {
            assert!(d == 10 || d == 11, "{d}");
        }
        let small = small_code();
        assert_eq!(small.info_len(), 150);
    }

    #[test]
    fn apportion_matches_profile() {
        let alloc = DegreeProfile::paper_variable().apportion(1008);
        assert_eq!(alloc.iter().map(|a| a.1).sum::<usize>(), 1008);
        assert_eq!(alloc, vec![(1, 1), (2, 287), (3, 288), (4, 432)]);
    }

    #[test]
    fn zero_info_gives_zero_codeword() {
        let code = small_code();
        let cw = code.encode(&vec![0; code.info_len()]).unwrap();
        assert!(cw.iter().all(|&b| b == 0));
    }

    #[test]
    fn encoder_satisfies_checks_and_is_systematic() {
        let code = small_code();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..50 {
            let info: Vec<u8> = (0..code.info_len()).map(|_| rng.random_range(0..2)).collect();
            let cw = code.encode(&info).unwrap();
            assert!(code.syndrome_ok(&cw));
            assert_eq!(code.info_bits(&cw), info);
        }
        assert!(matches!(code.encode(&[0, 1]), Err(CodecError::InfoLength { .. })));
    }

    #[test]
    fn noiseless_llrs_are_a_fixed_point() {
        let code = small_code();
        let mut rng = ChaCha8Rng::seed_from_u64(10);
        let info: Vec<u8> = (0..code.info_len()).map(|_| rng.random_range(0..2)).collect();
        let cw = code.encode(&info).unwrap();
        let llrs: Vec<f64> = cw.iter().map(|&b| if b == 0 { 20.0 } else { -20.0 }).collect();
        let out = code.decode_bp(&llrs, 10);
        assert!(out.syndrome_ok);
        assert_eq!(out.hard, cw);
        assert_eq!(out.iterations, 1);
    }

    #[test]
    fn zero_llrs_give_zero_extrinsic() {
        let code = small_code();
        let out = code.decode_bp(&vec![0.0; code.len()], 5);
        assert!(out.extrinsic.iter().all(|&e| e == 0.0));
    }

    #[test]
    fn corrects_single_flipped_llr() {
        let code = small_code();
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for trial in 0..20 {
            let info: Vec<u8> = (0..code.info_len()).map(|_| rng.random_range(0..2)).collect();
            let cw = code.encode(&info).unwrap();
            let mut llrs: Vec<f64> = cw.iter().map(|&b| if b == 0 { 4.0 } else { -4.0 }).collect();
            // degree-1 bits are only protected by one check; flip a well-connected one
            let degrees = code.variable_degrees();
            let victim = (trial * 37 + 5..).map(|i| i % code.len()).find(|&i| degrees[i] >= 2).unwrap();
            llrs[victim] = -llrs[victim];
            let out = code.decode_bp(&llrs, 5);
            assert!(out.syndrome_ok, "trial {trial}");
            assert_eq!(out.hard, cw);
            assert!(out.iterations <= 5);
        }
    }

    #[test]
    fn tiny_code_against_hand_sum_product() {
        // (7,4) Hamming code; one check-node update computed by hand.
        let checks = vec![vec![0, 1, 2, 4], vec![1, 2, 3, 5], vec![0, 2, 3, 6]];
        let code = LdpcCode::from_checks(7, checks).unwrap();
        assert_eq!(code.info_len(), 4);
        let llr = [1.0, -0.5, 2.0, 0.3, 1.5, -1.0, 0.8];
        let out = code.decode_bp(&llr, 1);
        // Bit 0 sits in checks 0 and 2.
        let msg = |others: &[usize]| {
            2.0 * others.iter().map(|&v| (llr[v] / 2.0f64).tanh()).product::<f64>().atanh()
        };
        let expected = llr[0] + msg(&[1, 2, 4]) + msg(&[2, 3, 6]);
        assert!((out.posterior[0] - expected).abs() < 1e-12);
        assert!((out.extrinsic[0] - (expected - llr[0])).abs() < 1e-12);
    }

    #[test]
    fn json_roundtrip_rebuilds_encoder() {
        let code = small_code();
        let back = LdpcCode::from_json(&code.to_json()).unwrap();
        assert_eq!(back, code);
    }

    #[test]
    fn rank_deficiency_is_reported() {
        let checks = vec![vec![0, 1], vec![1, 2], vec![0, 2]];
        assert!(matches!(
            LdpcCode::from_checks(3, checks),
            Err(CodecError::RankDeficient { rank: 2, checks: 3 })
        ));
    }
}
