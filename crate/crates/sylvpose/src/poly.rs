//! Dense homogeneous polynomials in the quaternion variables (w, x, y, z).
//!
//! Every polynomial in the pipeline is homogeneous of a known total degree, so
//! a polynomial is stored as a flat coefficient vector over the monomials of
//! that degree. Monomials are ordered graded-lexicographically with
//! w > x > y > z; within one degree this is plain descending lexicographic
//! order on the exponent vectors. Index 0 is always w^d and indices 1..=3 are
//! w^{d-1}x, w^{d-1}y, w^{d-1}z, which is what pencil column ordering and
//! quaternion read-off rely on.

/// Exponents (a_w, a_x, a_y, a_z) of one monomial.
pub type Exponents = [u8; 4];

/// Highest degree for which a cached monomial basis exists. Degree 9 is the
/// largest eliminant degree; products in tests go up to twice a Sylvester
/// block degree.
pub const MAX_DEGREE: usize = 12;

fn binomial(n: usize, k: usize) -> usize {
    if k > n {
        return 0;
    }
    let k = k.min(n - k);
    let mut num = 1usize;
    for i in 0..k {
        num = num * (n - i) / (i + 1);
    }
    num
}

/// Number of monomials of total degree `degree` in four variables.
pub fn monomial_count(degree: usize) -> usize {
    binomial(degree + 3, 3)
}

/// The ordered monomials of one total degree.
pub struct MonomialBasis {
    degree: usize,
    exps: Vec<Exponents>,
}

impl MonomialBasis {
    fn build(degree: usize) -> Self {
        let d = degree as u8;
        let mut exps = Vec::with_capacity(monomial_count(degree));
        for a in (0..=d).rev() {
            for b in (0..=d - a).rev() {
                for c in (0..=d - a - b).rev() {
                    exps.push([a, b, c, d - a - b - c]);
                }
            }
        }
        MonomialBasis { degree, exps }
    }

    /// Cached basis for `degree <= MAX_DEGREE`.
    pub fn get(degree: usize) -> &'static MonomialBasis {
        use std::sync::OnceLock;
        static BASES: OnceLock<Vec<MonomialBasis>> = OnceLock::new();
        let bases = BASES.get_or_init(|| (0..=MAX_DEGREE).map(MonomialBasis::build).collect());
        &bases[degree]
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn len(&self) -> usize {
        self.exps.len()
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn exponents(&self, index: usize) -> Exponents {
        self.exps[index]
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, Exponents)> + '_ {
        self.exps.iter().copied().enumerate()
    }

    /// Position of an exponent vector, in closed form: monomials preceding
    /// (a, b, c, e) are those with a larger w-exponent, then those with the
    /// same w but larger x, then same (w, x) but larger y.
    pub fn index_of(&self, e: Exponents) -> usize {
        let d = self.degree;
        let (a, b, c) = (e[0] as usize, e[1] as usize, e[2] as usize);
        debug_assert_eq!(a + b + c + e[3] as usize, d);
        let t = d - a - b;
        binomial(d - a + 2, 3) + t * (t + 1) / 2 + (t - c)
    }
}

/// Dense homogeneous polynomial of a fixed total degree.
#[derive(Clone, Debug, PartialEq)]
pub struct HomoPoly {
    degree: usize,
    coeffs: Vec<f64>,
}

impl HomoPoly {
    pub fn zero(degree: usize) -> Self {
        HomoPoly {
            degree,
            coeffs: vec![0.0; monomial_count(degree)],
        }
    }

    pub fn from_coeffs(degree: usize, coeffs: Vec<f64>) -> Self {
        assert_eq!(coeffs.len(), monomial_count(degree));
        HomoPoly { degree, coeffs }
    }

    /// The single monomial `coeff * w^a x^b y^c z^e`.
    pub fn monomial(exps: Exponents, coeff: f64) -> Self {
        let degree = exps.iter().map(|&v| v as usize).sum();
        let mut p = HomoPoly::zero(degree);
        let idx = MonomialBasis::get(degree).index_of(exps);
        p.coeffs[idx] = coeff;
        p
    }

    /// The bare variable `w`, `x`, `y` or `z` (degree 1).
    pub fn variable(var: usize) -> Self {
        let mut exps = [0u8; 4];
        exps[var] = 1;
        HomoPoly::monomial(exps, 1.0)
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeff(&self, exps: Exponents) -> f64 {
        self.coeffs[MonomialBasis::get(self.degree).index_of(exps)]
    }

    pub fn add_term(&mut self, exps: Exponents, coeff: f64) {
        let idx = MonomialBasis::get(self.degree).index_of(exps);
        self.coeffs[idx] += coeff;
    }

    pub fn is_zero(&self) -> bool {
        self.coeffs.iter().all(|&c| c == 0.0)
    }

    pub fn l2_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c * c).sum::<f64>().sqrt()
    }

    pub fn scaled(&self, s: f64) -> Self {
        HomoPoly {
            degree: self.degree,
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    /// `self += s * other`; degrees must match.
    pub fn axpy(&mut self, s: f64, other: &HomoPoly) {
        assert_eq!(self.degree, other.degree);
        for (a, b) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *a += s * b;
        }
    }

    pub fn add(&self, other: &HomoPoly) -> Self {
        let mut out = self.clone();
        out.axpy(1.0, other);
        out
    }

    pub fn sub(&self, other: &HomoPoly) -> Self {
        let mut out = self.clone();
        out.axpy(-1.0, other);
        out
    }

    pub fn mul(&self, other: &HomoPoly) -> Self {
        let out_degree = self.degree + other.degree;
        let ba = MonomialBasis::get(self.degree);
        let bb = MonomialBasis::get(other.degree);
        let bo = MonomialBasis::get(out_degree);
        let mut out = HomoPoly::zero(out_degree);
        for (i, ea) in ba.iter() {
            let ca = self.coeffs[i];
            if ca == 0.0 {
                continue;
            }
            for (j, eb) in bb.iter() {
                let cb = other.coeffs[j];
                if cb == 0.0 {
                    continue;
                }
                let e = [ea[0] + eb[0], ea[1] + eb[1], ea[2] + eb[2], ea[3] + eb[3]];
                out.coeffs[bo.index_of(e)] += ca * cb;
            }
        }
        out
    }

    /// Multiply by a single monomial (pure index shift).
    pub fn mul_monomial(&self, exps: Exponents) -> Self {
        let shift_deg = exps.iter().map(|&v| v as usize).sum::<usize>();
        let out_degree = self.degree + shift_deg;
        let ba = MonomialBasis::get(self.degree);
        let bo = MonomialBasis::get(out_degree);
        let mut out = HomoPoly::zero(out_degree);
        for (i, ea) in ba.iter() {
            let c = self.coeffs[i];
            if c == 0.0 {
                continue;
            }
            let e = [ea[0] + exps[0], ea[1] + exps[1], ea[2] + exps[2], ea[3] + exps[3]];
            out.coeffs[bo.index_of(e)] += c;
        }
        out
    }

    pub fn partial_derivative(&self, var: usize) -> Self {
        assert!(self.degree >= 1);
        let ba = MonomialBasis::get(self.degree);
        let bo = MonomialBasis::get(self.degree - 1);
        let mut out = HomoPoly::zero(self.degree - 1);
        for (i, ea) in ba.iter() {
            let c = self.coeffs[i];
            if c == 0.0 || ea[var] == 0 {
                continue;
            }
            let mut e = ea;
            e[var] -= 1;
            out.coeffs[bo.index_of(e)] += c * ea[var] as f64;
        }
        out
    }

    pub fn eval(&self, q: &[f64; 4]) -> f64 {
        // Per-variable power tables; one multiply chain per monomial.
        let d = self.degree;
        let mut pow = [[1.0f64; MAX_DEGREE + 1]; 4];
        for v in 0..4 {
            for k in 1..=d {
                pow[v][k] = pow[v][k - 1] * q[v];
            }
        }
        let basis = MonomialBasis::get(d);
        let mut acc = 0.0;
        for (i, e) in basis.iter() {
            let c = self.coeffs[i];
            if c == 0.0 {
                continue;
            }
            acc += c
                * pow[0][e[0] as usize]
                * pow[1][e[1] as usize]
                * pow[2][e[2] as usize]
                * pow[3][e[3] as usize];
        }
        acc
    }
}

/// All monomials of one degree evaluated at q, in basis order.
pub fn monomial_vector(degree: usize, q: &[f64; 4]) -> Vec<f64> {
    let mut pow = [[1.0f64; MAX_DEGREE + 1]; 4];
    for v in 0..4 {
        for k in 1..=degree {
            pow[v][k] = pow[v][k - 1] * q[v];
        }
    }
    MonomialBasis::get(degree)
        .iter()
        .map(|(_, e)| {
            pow[0][e[0] as usize]
                * pow[1][e[1] as usize]
                * pow[2][e[2] as usize]
                * pow[3][e[3] as usize]
        })
        .collect()
}

/// Polynomial in the spectral parameter lambda whose coefficients are
/// homogeneous polynomials of one shared q-degree: sum_k slices[k] * lambda^k.
#[derive(Clone, Debug)]
pub struct LambdaPoly {
    q_degree: usize,
    slices: Vec<HomoPoly>,
}

impl LambdaPoly {
    pub fn new(slices: Vec<HomoPoly>) -> Self {
        assert!(!slices.is_empty());
        let q_degree = slices[0].degree();
        assert!(slices.iter().all(|s| s.degree() == q_degree));
        LambdaPoly { q_degree, slices }
    }

    pub fn zero(q_degree: usize) -> Self {
        LambdaPoly {
            q_degree,
            slices: vec![HomoPoly::zero(q_degree)],
        }
    }

    pub fn q_degree(&self) -> usize {
        self.q_degree
    }

    pub fn lambda_degree(&self) -> usize {
        self.slices.len() - 1
    }

    pub fn slices(&self) -> &[HomoPoly] {
        &self.slices
    }

    /// Slice `k`, treating absent high-order slices as zero.
    pub fn slice_or_zero(&self, k: usize) -> HomoPoly {
        self.slices
            .get(k)
            .cloned()
            .unwrap_or_else(|| HomoPoly::zero(self.q_degree))
    }

    pub fn is_zero(&self) -> bool {
        self.slices.iter().all(|s| s.is_zero())
    }

    pub fn l2_norm(&self) -> f64 {
        self.slices
            .iter()
            .map(|s| {
                let n = s.l2_norm();
                n * n
            })
            .sum::<f64>()
            .sqrt()
    }

    pub fn add(&self, other: &LambdaPoly) -> Self {
        assert_eq!(self.q_degree, other.q_degree);
        let n = self.slices.len().max(other.slices.len());
        let slices = (0..n)
            .map(|k| self.slice_or_zero(k).add(&other.slice_or_zero(k)))
            .collect();
        LambdaPoly::new(slices)
    }

    pub fn sub(&self, other: &LambdaPoly) -> Self {
        assert_eq!(self.q_degree, other.q_degree);
        let n = self.slices.len().max(other.slices.len());
        let slices = (0..n)
            .map(|k| self.slice_or_zero(k).sub(&other.slice_or_zero(k)))
            .collect();
        LambdaPoly::new(slices)
    }

    pub fn mul(&self, other: &LambdaPoly) -> Self {
        let q_degree = self.q_degree + other.q_degree;
        let n = self.slices.len() + other.slices.len() - 1;
        let mut slices = vec![HomoPoly::zero(q_degree); n];
        for (i, a) in self.slices.iter().enumerate() {
            if a.is_zero() {
                continue;
            }
            for (j, b) in other.slices.iter().enumerate() {
                if b.is_zero() {
                    continue;
                }
                slices[i + j].axpy(1.0, &a.mul(b));
            }
        }
        LambdaPoly { q_degree, slices }
    }

    pub fn eval(&self, q: &[f64; 4], lambda: f64) -> f64 {
        let mut acc = 0.0;
        let mut lp = 1.0;
        for s in &self.slices {
            acc += lp * s.eval(q);
            lp *= lambda;
        }
        acc
    }
}

/// Determinant of a 4x4 matrix of lambda-polynomials by Laplace expansion
/// along the column with the most structurally zero entries. Column q-degrees
/// must be uniform across rows so every expansion term has one total degree.
pub fn lambda_det4(m: &[[LambdaPoly; 4]; 4]) -> LambdaPoly {
    let rows: Vec<Vec<LambdaPoly>> = m.iter().map(|r| r.to_vec()).collect();
    det_rec(&rows)
}

fn det_rec(m: &[Vec<LambdaPoly>]) -> LambdaPoly {
    let n = m.len();
    if n == 1 {
        return m[0][0].clone();
    }
    for j in 0..n {
        let d0 = m[0][j].q_degree();
        assert!(
            m.iter().all(|row| row[j].q_degree() == d0),
            "column {j} has mixed q-degrees"
        );
    }
    let total_degree: usize = (0..n).map(|j| m[0][j].q_degree()).sum();
    let col = (0..n)
        .max_by_key(|&j| m.iter().filter(|row| row[j].is_zero()).count())
        .unwrap();
    let mut acc = LambdaPoly::zero(total_degree);
    for i in 0..n {
        if m[i][col].is_zero() {
            continue;
        }
        let minor: Vec<Vec<LambdaPoly>> = m
            .iter()
            .enumerate()
            .filter(|(r, _)| *r != i)
            .map(|(_, row)| {
                row.iter()
                    .enumerate()
                    .filter(|(c, _)| *c != col)
                    .map(|(_, e)| e.clone())
                    .collect()
            })
            .collect();
        let term = m[i][col].mul(&det_rec(&minor));
        if (i + col) % 2 == 0 {
            acc = acc.add(&term);
        } else {
            acc = acc.sub(&term);
        }
    }
    acc
}
