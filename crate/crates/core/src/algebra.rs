//! Exact Lie-algebra data for the holomorphic vector fields of each backend.
//!
//! `h(ℂP¹) ≅ sl(2,ℂ)` and `h(Bl_p ℂP²) ≅ gl(2,ℂ) ⋉ ℂ²`, the latter realised as
//! the parabolic subalgebra of `sl(3,ℂ)` stabilising the blown-up point.
//! Bracket tables are written out by hand with rational entries; the matrix
//! realisations are kept alongside so the tables can be checked against
//! honest matrix commutators.

use nalgebra::DMatrix;
use num_complex::Complex64;
use num_rational::Rational64;
use num_traits::{ToPrimitive, Zero};

/// One entry `[e_i, e_j] = Σ_k coeff · e_k` of a bracket table.
type BracketEntry = (usize, usize, &'static [(usize, i64, i64)]);

/// A basis element of `h(X)`.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldGenerator {
    pub name: &'static str,
    /// Square matrix realisation with rational entries.
    pub matrix: Vec<Vec<Rational64>>,
}

/// Rank-3 array `c^k_{ij}` with `[e_i, e_j] = Σ_k c^k_{ij} e_k`.
#[derive(Debug, Clone, PartialEq)]
pub struct StructureConstants {
    dim: usize,
    data: Vec<Rational64>,
}

impl StructureConstants {
    fn from_table(dim: usize, table: &[BracketEntry]) -> Self {
        let mut sc = StructureConstants {
            dim,
            data: vec![Rational64::zero(); dim * dim * dim],
        };
        for &(i, j, terms) in table {
            for &(k, num, den) in terms {
                let v = Rational64::new(num, den);
                *sc.entry_mut(k, i, j) = v;
                *sc.entry_mut(k, j, i) = -v;
            }
        }
        sc
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    /// `c^k_{ij}`.
    pub fn get(&self, k: usize, i: usize, j: usize) -> Rational64 {
        self.data[(k * self.dim + i) * self.dim + j]
    }

    fn entry_mut(&mut self, k: usize, i: usize, j: usize) -> &mut Rational64 {
        let d = self.dim;
        &mut self.data[(k * d + i) * d + j]
    }

    /// `c^k_{ij} + c^k_{ji} = 0` for all indices, in exact arithmetic.
    pub fn is_antisymmetric(&self) -> bool {
        let d = self.dim;
        (0..d).all(|k| {
            (0..d).all(|i| {
                (0..d).all(|j| self.get(k, i, j) + self.get(k, j, i) == Rational64::zero())
            })
        })
    }

    /// Exact Jacobi identity on every basis triple.
    pub fn satisfies_jacobi(&self) -> bool {
        let d = self.dim;
        for i in 0..d {
            for j in 0..d {
                for l in 0..d {
                    for m in 0..d {
                        // [[e_i,e_j],e_l] + [[e_j,e_l],e_i] + [[e_l,e_i],e_j], component m
                        let mut s = Rational64::zero();
                        for k in 0..d {
                            s += self.get(k, i, j) * self.get(m, k, l)
                                + self.get(k, j, l) * self.get(m, k, i)
                                + self.get(k, l, i) * self.get(m, k, j);
                        }
                        if s != Rational64::zero() {
                            return false;
                        }
                    }
                }
            }
        }
        true
    }

    /// Bracket of two coefficient vectors.
    pub fn bracket<T>(&self, x: &[T], y: &[T]) -> Vec<T>
    where
        T: Copy + Zero + std::ops::Mul<f64, Output = T> + std::ops::Mul<T, Output = T>,
    {
        let d = self.dim;
        let mut out = vec![T::zero(); d];
        for (i, &xi) in x.iter().enumerate().take(d) {
            for (j, &yj) in y.iter().enumerate().take(d) {
                let xy = xi * yj;
                for (k, o) in out.iter_mut().enumerate() {
                    let c = self.get(k, i, j);
                    if !c.is_zero() {
                        *o = *o + xy * c.to_f64().unwrap_or(0.0);
                    }
                }
            }
        }
        out
    }

    /// Matrix of `ad(x)` on the basis: column `j` holds `[x, e_j]`.
    pub fn ad_matrix(&self, x: &[f64]) -> DMatrix<f64> {
        let d = self.dim;
        DMatrix::from_fn(d, d, |k, j| {
            (0..d)
                .map(|i| x[i] * self.get(k, i, j).to_f64().unwrap_or(0.0))
                .sum()
        })
    }
}

/// Field catalog of one backend.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldAlgebra {
    pub basis: Vec<FieldGenerator>,
    pub structure_constants: StructureConstants,
    /// Index of the generator of the cohomogeneity-one action; its holomorphy
    /// potential is `-(y - ȳ)` with `y` the moment coordinate.
    pub generator: usize,
}

fn r(n: i64, d: i64) -> Rational64 {
    Rational64::new(n, d)
}

fn unit(dim: usize, row: usize, col: usize) -> Vec<Vec<Rational64>> {
    let mut m = vec![vec![Rational64::zero(); dim]; dim];
    m[row][col] = r(1, 1);
    m
}

fn diag(entries: &[Rational64]) -> Vec<Vec<Rational64>> {
    let n = entries.len();
    let mut m = vec![vec![Rational64::zero(); n]; n];
    for (i, e) in entries.iter().enumerate() {
        m[i][i] = *e;
    }
    m
}

impl FieldAlgebra {
    /// `sl(2,ℂ)` with basis `T = diag(1/2,-1/2)`, `E = e₀₁`, `F = e₁₀`.
    pub fn sl2() -> Self {
        let basis = vec![
            FieldGenerator {
                name: "T",
                matrix: diag(&[r(1, 2), r(-1, 2)]),
            },
            FieldGenerator {
                name: "E",
                matrix: unit(2, 0, 1),
            },
            FieldGenerator {
                name: "F",
                matrix: unit(2, 1, 0),
            },
        ];
        let table: &[BracketEntry] = &[
            (0, 1, &[(1, 1, 1)]),
            (0, 2, &[(2, -1, 1)]),
            (1, 2, &[(0, 2, 1)]),
        ];
        FieldAlgebra {
            basis,
            structure_constants: StructureConstants::from_table(3, table),
            generator: 0,
        }
    }

    /// `gl(2,ℂ) ⋉ ℂ²` inside `sl(3,ℂ)`: `D = diag(-2/3,1/3,1/3)` spans the
    /// centre of the Levi factor, `T, E, F` its `sl(2)`, and `N₁ = e₀₁`,
    /// `N₂ = e₀₂` the nilradical.
    pub fn parabolic_sl3() -> Self {
        let basis = vec![
            FieldGenerator {
                name: "D",
                matrix: diag(&[r(-2, 3), r(1, 3), r(1, 3)]),
            },
            FieldGenerator {
                name: "T",
                matrix: diag(&[r(0, 1), r(1, 2), r(-1, 2)]),
            },
            FieldGenerator {
                name: "E",
                matrix: unit(3, 1, 2),
            },
            FieldGenerator {
                name: "F",
                matrix: unit(3, 2, 1),
            },
            FieldGenerator {
                name: "N1",
                matrix: unit(3, 0, 1),
            },
            FieldGenerator {
                name: "N2",
                matrix: unit(3, 0, 2),
            },
        ];
        let table: &[BracketEntry] = &[
            (0, 4, &[(4, -1, 1)]),
            (0, 5, &[(5, -1, 1)]),
            (1, 2, &[(2, 1, 1)]),
            (1, 3, &[(3, -1, 1)]),
            (1, 4, &[(4, -1, 2)]),
            (1, 5, &[(5, 1, 2)]),
            (2, 3, &[(1, 2, 1)]),
            (2, 4, &[(5, -1, 1)]),
            (3, 5, &[(4, -1, 1)]),
        ];
        FieldAlgebra {
            basis,
            structure_constants: StructureConstants::from_table(6, table),
            generator: 0,
        }
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    fn matrix_size(&self) -> usize {
        self.basis[0].matrix.len()
    }

    /// Complex matrix `Σ coeffs_i · X_i`.
    pub fn realise(&self, coeffs: &[Complex64]) -> DMatrix<Complex64> {
        let n = self.matrix_size();
        DMatrix::from_fn(n, n, |a, b| {
            self.basis
                .iter()
                .zip(coeffs)
                .map(|(g, c)| *c * g.matrix[a][b].to_f64().unwrap_or(0.0))
                .sum()
        })
    }

    /// Compact-real-form involution `X ↦ -X^H`, fixing `u(n)`.
    pub fn conjugation(m: &DMatrix<Complex64>) -> DMatrix<Complex64> {
        -m.adjoint()
    }

    /// Exact commutator of two basis matrices.
    pub fn matrix_commutator(&self, i: usize, j: usize) -> Vec<Vec<Rational64>> {
        let a = &self.basis[i].matrix;
        let b = &self.basis[j].matrix;
        let n = a.len();
        let mut out = vec![vec![Rational64::zero(); n]; n];
        for (p, row) in out.iter_mut().enumerate() {
            for (q, o) in row.iter_mut().enumerate() {
                for s in 0..n {
                    *o += a[p][s] * b[s][q] - b[p][s] * a[s][q];
                }
            }
        }
        out
    }

    /// Exact matrix `Σ_k coeffs_k X_k`.
    pub fn combine_exact(&self, coeffs: &[Rational64]) -> Vec<Vec<Rational64>> {
        let n = self.matrix_size();
        let mut out = vec![vec![Rational64::zero(); n]; n];
        for (g, c) in self.basis.iter().zip(coeffs) {
            for (p, row) in out.iter_mut().enumerate() {
                for (q, o) in row.iter_mut().enumerate() {
                    *o += *c * g.matrix[p][q];
                }
            }
        }
        out
    }
}
