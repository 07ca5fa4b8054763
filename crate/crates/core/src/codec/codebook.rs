use std::f64::consts::{FRAC_1_SQRT_2, PI};

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{label_bit, symbol_from_bits, CodecError};

/// Binary `J × K` matrix marking which resources (antennas) each user occupies.
///
/// Stored row-major: `rows[j][k] == 1` iff user `k` transmits on antenna `j`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct IndicatorMatrix {
    rows: Vec<Vec<u8>>,
}

impl IndicatorMatrix {
    pub fn new(rows: Vec<Vec<u8>>) -> Result<Self, CodecError> {
        let cols = rows.first().map_or(0, Vec::len);
        if cols == 0
            || rows.iter().any(|r| r.len() != cols || r.iter().any(|&b| b > 1))
        {
            return Err(CodecError::MalformedIndicator);
        }
        Ok(IndicatorMatrix { rows })
    }

    /// The 4 × 6 matrix used for the 150 % overloaded reference system.
    pub fn paper_default() -> Self {
        IndicatorMatrix {
            rows: vec![
                vec![1, 0, 1, 0, 1, 0],
                vec![1, 1, 0, 0, 0, 1],
                vec![0, 1, 1, 1, 0, 0],
                vec![0, 0, 0, 1, 1, 1],
            ],
        }
    }

    pub fn identity(n: usize) -> Self {
        IndicatorMatrix {
            rows: (0..n)
                .map(|j| (0..n).map(|k| u8::from(j == k)).collect())
                .collect(),
        }
    }

    /// Number of resources `J`.
    pub fn resources(&self) -> usize {
        self.rows.len()
    }

    /// Number of users `K`.
    pub fn users(&self) -> usize {
        self.rows[0].len()
    }

    pub fn get(&self, j: usize, k: usize) -> bool {
        self.rows[j][k] == 1
    }

    pub fn rows(&self) -> &[Vec<u8>] {
        &self.rows
    }

    /// Antennas occupied by user `k`, ascending.
    pub fn support(&self, k: usize) -> Vec<usize> {
        (0..self.resources()).filter(|&j| self.get(j, k)).collect()
    }

    /// Users superposed on antenna `j`, ascending.
    pub fn users_on(&self, j: usize) -> Vec<usize> {
        (0..self.users()).filter(|&k| self.get(j, k)).collect()
    }
}

/// Unit-energy QPSK points ordered around the circle so that consecutive
/// indices are Gray neighbours.
pub fn qpsk_constellation() -> Vec<Complex64> {
    let a = FRAC_1_SQRT_2;
    vec![
        Complex64::new(a, a),
        Complex64::new(-a, a),
        Complex64::new(-a, -a),
        Complex64::new(a, -a),
    ]
}

pub fn bpsk_constellation() -> Vec<Complex64> {
    vec![Complex64::new(1.0, 0.0), Complex64::new(-1.0, 0.0)]
}

/// Per-user sparse codeword tables.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Codebook {
    pub indicator: IndicatorMatrix,
    /// Codebook size `M`.
    pub size: usize,
    /// Nonzero entries per codeword `D`.
    pub nonzeros: usize,
    /// `codewords[k][m][j]`: entry of codeword `m` of user `k` on antenna `j`.
    pub codewords: Vec<Vec<Vec<Complex64>>>,
}

/// Builds a codebook by placing the seed constellation on every occupied
/// antenna of a user, rotated by `2πk / (K·M)` for user `k`, and normalising
/// the mean codeword energy of each user to one.
pub fn build_codebook(
    indicator: IndicatorMatrix,
    size: usize,
    seed: &[Complex64],
) -> Result<Codebook, CodecError> {
    if size < 2 || !size.is_power_of_two() {
        return Err(CodecError::CodebookSize(size));
    }
    if seed.len() != size {
        return Err(CodecError::SeedSize {
            got: seed.len(),
            expected: size,
        });
    }
    let k_users = indicator.users();
    let j_res = indicator.resources();
    let nonzeros = indicator.support(0).len();
    for k in 0..k_users {
        let weight = indicator.support(k).len();
        if weight != nonzeros || weight == 0 {
            return Err(CodecError::ColumnWeight {
                column: k,
                weight,
                expected: nonzeros,
            });
        }
    }

    let mut codewords = Vec::with_capacity(k_users);
    for k in 0..k_users {
        let rot = Complex64::from_polar(1.0, 2.0 * PI * k as f64 / (k_users * size) as f64);
        let support = indicator.support(k);
        let mut table: Vec<Vec<Complex64>> = (0..size)
            .map(|m| {
                let mut cw = vec![Complex64::new(0.0, 0.0); j_res];
                for &j in &support {
                    cw[j] = seed[m] * rot;
                }
                cw
            })
            .collect();
        let energy: f64 = table
            .iter()
            .map(|cw| cw.iter().map(|c| c.norm_sqr()).sum::<f64>())
            .sum::<f64>()
            / size as f64;
        let scale = 1.0 / energy.sqrt();
        for cw in &mut table {
            for c in cw.iter_mut() {
                *c *= scale;
            }
        }
        codewords.push(table);
    }

    Ok(Codebook {
        indicator,
        size,
        nonzeros,
        codewords,
    })
}

impl Codebook {
    pub fn paper_default() -> Self {
        build_codebook(IndicatorMatrix::paper_default(), 4, &qpsk_constellation())
            .expect("reference indicator is valid")
    }

    pub fn users(&self) -> usize {
        self.indicator.users()
    }

    pub fn resources(&self) -> usize {
        self.indicator.resources()
    }

    pub fn bits_per_symbol(&self) -> usize {
        self.size.trailing_zeros() as usize
    }

    /// Users per resource divided by resources, `K / J`.
    pub fn overloading(&self) -> f64 {
        self.users() as f64 / self.resources() as f64
    }

    pub fn codeword(&self, k: usize, m: usize) -> &[Complex64] {
        &self.codewords[k][m]
    }

    /// Value of codeword `m` of user `k` on antenna `j`.
    pub fn entry(&self, k: usize, m: usize, j: usize) -> Complex64 {
        self.codewords[k][m][j]
    }

    /// Maps a coded bit stream onto codeword indices, `log2 M` bits per symbol.
    pub fn encode_symbols(&self, bits: &[u8]) -> Result<Vec<usize>, CodecError> {
        let bps = self.bits_per_symbol();
        if bits.len() % bps != 0 {
            return Err(CodecError::Misaligned {
                len: bits.len(),
                bits_per_symbol: bps,
            });
        }
        Ok(bits.chunks(bps).map(symbol_from_bits).collect())
    }

    /// Label bits of codeword index `m`.
    pub fn symbol_bits(&self, m: usize) -> Vec<u8> {
        let bps = self.bits_per_symbol();
        (0..bps).map(|b| label_bit(m, b, bps)).collect()
    }

    /// Antenna samples at time `n`: `s_j = Σ_k x_{k,j}`.
    pub fn superpose(&self, symbols: &[Vec<usize>], n: usize) -> Vec<Complex64> {
        let mut s = vec![Complex64::new(0.0, 0.0); self.resources()];
        for (k, seq) in symbols.iter().enumerate() {
            for (sj, &x) in s.iter_mut().zip(self.codeword(k, seq[n])) {
                *sj += x;
            }
        }
        s
    }

    /// Antenna samples for a whole frame, indexed `[j][n]`.
    pub fn superpose_frame(&self, symbols: &[Vec<usize>]) -> Vec<Vec<Complex64>> {
        let frame_len = symbols.first().map_or(0, Vec::len);
        let mut out = vec![vec![Complex64::new(0.0, 0.0); frame_len]; self.resources()];
        for n in 0..frame_len {
            for (j, v) in self.superpose(symbols, n).into_iter().enumerate() {
                out[j][n] = v;
            }
        }
        out
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("codebook serialises")
    }

    pub fn from_json(text: &str) -> Result<Self, serde_json::Error> {
        serde_json::from_str(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn paper_codebook_shape() {
        let cb = Codebook::paper_default();
        assert_eq!(cb.users(), 6);
        assert_eq!(cb.resources(), 4);
        assert_eq!(cb.nonzeros, 2);
        assert!((cb.overloading() - 1.5).abs() < 1e-15);
        assert_eq!(cb.indicator.support(0), vec![0, 1]);
        assert_eq!(cb.indicator.support(3), vec![2, 3]);
        assert_eq!(cb.indicator.users_on(0), vec![0, 2, 4]);
        for j in 0..4 {
            assert_eq!(cb.indicator.users_on(j).len(), 3);
        }
    }

    #[test]
    fn sparsity_and_energy() {
        let cb = Codebook::paper_default();
        for k in 0..cb.users() {
            let mut energy = 0.0;
            for m in 0..cb.size {
                let cw = cb.codeword(k, m);
                for (j, c) in cw.iter().enumerate() {
                    assert_eq!(c.norm() > 0.0, cb.indicator.get(j, k));
                }
                assert_eq!(cw.iter().filter(|c| c.norm() > 0.0).count(), cb.nonzeros);
                energy += cw.iter().map(|c| c.norm_sqr()).sum::<f64>();
            }
            assert!((energy / cb.size as f64 - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn orthogonal_bpsk_degenerate_case() {
        let cb = build_codebook(IndicatorMatrix::identity(2), 2, &bpsk_constellation()).unwrap();
        assert_eq!(cb.nonzeros, 1);
        for k in 0..2 {
            for m in 0..2 {
                let cw = cb.codeword(k, m);
                assert_eq!(cw[1 - k], Complex64::new(0.0, 0.0));
                assert!((cw[k].norm() - 1.0).abs() < 1e-15);
            }
            // antipodal pair on the user's own row
            assert!((cb.entry(k, 0, k) + cb.entry(k, 1, k)).norm() < 1e-15);
        }
        assert_eq!(cb.entry(0, 0, 0), Complex64::new(1.0, 0.0));
        assert_eq!(cb.entry(0, 1, 0), Complex64::new(-1.0, 0.0));
    }

    #[test]
    fn rejects_uneven_columns() {
        let f = IndicatorMatrix::new(vec![vec![1, 1], vec![1, 0], vec![0, 0]]).unwrap();
        assert!(matches!(
            build_codebook(f, 4, &qpsk_constellation()),
            Err(CodecError::ColumnWeight { column: 1, .. })
        ));
        assert!(IndicatorMatrix::new(vec![vec![1, 2]]).is_err());
        assert!(build_codebook(IndicatorMatrix::identity(2), 3, &qpsk_constellation()).is_err());
    }

    #[test]
    fn deterministic_construction() {
        let a = Codebook::paper_default();
        let b = Codebook::paper_default();
        assert_eq!(a, b);
        let back = Codebook::from_json(&a.to_json()).unwrap();
        assert_eq!(back, a);
    }

    #[test]
    fn encode_maps_bit_pairs() {
        let cb = Codebook::paper_default();
        assert_eq!(cb.encode_symbols(&[0, 0]).unwrap(), vec![0]);
        let bits: Vec<u8> = (0..40).map(|i| (i * 7 % 3 == 0) as u8).collect();
        let syms = cb.encode_symbols(&bits).unwrap();
        assert_eq!(syms.len(), 20);
        for (i, &m) in syms.iter().enumerate() {
            assert_eq!(cb.symbol_bits(m), bits[2 * i..2 * i + 2].to_vec());
        }
        assert!(matches!(
            cb.encode_symbols(&[0, 1, 1]),
            Err(CodecError::Misaligned { .. })
        ));
    }

    #[test]
    fn superposition() {
        let cb = Codebook::paper_default();
        let symbols: Vec<Vec<usize>> = (0..6).map(|k| vec![k % 4, (k + 1) % 4]).collect();
        let s = cb.superpose(&symbols, 0);
        // antenna 0 carries users 0, 2, 4
        let expected = cb.entry(0, 0, 0) + cb.entry(2, 2, 0) + cb.entry(4, 0, 0);
        assert!((s[0] - expected).norm() < 1e-15);

        // disjoint supports: users 0 ({0,1}) and 3 ({2,3}) interleave without collision
        let mut only = vec![vec![0usize; 1]; 6];
        only[0][0] = 1;
        only[3][0] = 2;
        let single: Vec<Vec<usize>> = only.clone();
        let mut cb2 = cb.clone();
        // zero out everyone but users 0 and 3
        for k in [1, 2, 4, 5] {
            for cw in &mut cb2.codewords[k] {
                cw.iter_mut().for_each(|c| *c = Complex64::new(0.0, 0.0));
            }
        }
        let s = cb2.superpose(&single, 0);
        assert_eq!(s[0], cb.entry(0, 1, 0));
        assert_eq!(s[1], cb.entry(0, 1, 1));
        assert_eq!(s[2], cb.entry(3, 2, 2));
        assert_eq!(s[3], cb.entry(3, 2, 3));
    }
}
