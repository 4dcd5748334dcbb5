use nalgebra::{DMatrix, SymmetricEigen};

use crate::error::{Error, Result};
use crate::halfint::HalfInt;

use super::hamiltonian::{basis_states, build_hamiltonian, BasisState};
use super::{AtomicConstants, Manifold};

const SYMMETRY_TOLERANCE: f64 = 1e-10;

/// Eigen-decomposition of a real symmetric matrix.
///
/// Column `i` of `vectors` is the eigenvector whose largest component sits on
/// basis index `i`, so eigenstates inherit the basis labels. Each column is
/// signed so that this dominant component is positive.
#[derive(Clone, Debug)]
pub struct Eigenpairs {
    pub energies: Vec<f64>,
    pub vectors: DMatrix<f64>,
}

/// Connected components of the off-diagonal sparsity pattern.
fn blocks(h: &DMatrix<f64>) -> Vec<Vec<usize>> {
    let n = h.nrows();
    let mut parent: Vec<usize> = (0..n).collect();
    fn find(parent: &mut [usize], x: usize) -> usize {
        let mut root = x;
        while parent[root] != root {
            root = parent[root];
        }
        let mut cur = x;
        while parent[cur] != root {
            let next = parent[cur];
            parent[cur] = root;
            cur = next;
        }
        root
    }
    for r in 0..n {
        for s in (r + 1)..n {
            if h[(r, s)] != 0.0 || h[(s, r)] != 0.0 {
                let (a, b) = (find(&mut parent, r), find(&mut parent, s));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
    }
    let mut groups: Vec<Vec<usize>> = Vec::new();
    let mut root_index = vec![usize::MAX; n];
    for k in 0..n {
        let root = find(&mut parent, k);
        if root_index[root] == usize::MAX {
            root_index[root] = groups.len();
            groups.push(Vec::new());
        }
        groups[root_index[root]].push(k);
    }
    groups
}

/// Diagonalizes `h` block by block over its sparsity pattern.
pub fn diagonalize(h: &DMatrix<f64>) -> Result<Eigenpairs> {
    let n = h.nrows();
    if n != h.ncols() || n == 0 {
        return Err(Error::InvalidArgument(format!(
            "expected a non-empty square matrix, got {}x{}",
            h.nrows(),
            h.ncols()
        )));
    }
    if h.iter().any(|x| !x.is_finite()) {
        return Err(Error::InvalidArgument("matrix has non-finite entries".into()));
    }
    let scale = h.amax().max(1.0);
    let asymmetry = (h - h.transpose()).amax();
    if asymmetry > SYMMETRY_TOLERANCE * scale {
        return Err(Error::NotHermitian(asymmetry));
    }

    let mut energies = vec![0.0; n];
    let mut vectors = DMatrix::zeros(n, n);
    for block in blocks(h) {
        let m = block.len();
        let sub = DMatrix::from_fn(m, m, |r, s| 0.5 * (h[(block[r], block[s])] + h[(block[s], block[r])]));
        let eig = SymmetricEigen::new(sub);

        // Greedy assignment: repeatedly take the largest |amplitude| among
        // unassigned (eigenvector, basis) pairs; ties go to the lower index.
        let mut vec_used = vec![false; m];
        let mut basis_used = vec![false; m];
        for _ in 0..m {
            let mut best: Option<(usize, usize, f64)> = None;
            for v in (0..m).filter(|&v| !vec_used[v]) {
                for b in (0..m).filter(|&b| !basis_used[b]) {
                    let amp = eig.eigenvectors[(b, v)].abs();
                    let better = match best {
                        None => true,
                        Some((_, bb, ba)) => amp > ba + 1e-14 || ((amp - ba).abs() <= 1e-14 && b < bb),
                    };
                    if better {
                        best = Some((v, b, amp));
                    }
                }
            }
            let (v, b, _) = best.expect("non-empty block");
            vec_used[v] = true;
            basis_used[b] = true;
            let target = block[b];
            let sign = if eig.eigenvectors[(b, v)] < 0.0 { -1.0 } else { 1.0 };
            energies[target] = eig.eigenvalues[v];
            for (local, &global) in block.iter().enumerate() {
                vectors[(global, target)] = sign * eig.eigenvectors[(local, v)];
            }
        }
    }
    Ok(Eigenpairs { energies, vectors })
}

/// Eigenstates of one manifold at field B, labeled by dominant |m_I, m_J>.
#[derive(Clone, Debug)]
pub struct ZeemanEigensystem {
    pub field_t: f64,
    pub manifold: Manifold,
    /// MHz relative to the manifold's zero-field center of gravity.
    pub energies_mhz: Vec<f64>,
    /// Column i expands eigenstate i over `labels`.
    pub vectors: DMatrix<f64>,
    pub labels: Vec<BasisState>,
}

impl ZeemanEigensystem {
    pub fn compute(manifold: Manifold, field_t: f64, constants: &AtomicConstants) -> Result<Self> {
        let h = build_hamiltonian(manifold, field_t, constants)?;
        let pairs = diagonalize(&h)?;
        Ok(ZeemanEigensystem {
            field_t,
            manifold,
            energies_mhz: pairs.energies,
            vectors: pairs.vectors,
            labels: basis_states(constants.nuclear_spin(), constants.electronic_j(manifold)),
        })
    }

    pub fn len(&self) -> usize {
        self.energies_mhz.len()
    }

    pub fn is_empty(&self) -> bool {
        self.energies_mhz.is_empty()
    }

    /// Dominant uncoupled character of eigenstate `i`.
    pub fn dominant(&self, i: usize) -> BasisState {
        self.labels[i]
    }

    pub fn m_f(&self, i: usize) -> HalfInt {
        self.labels[i].m_f()
    }

    pub fn index_of(&self, label: BasisState) -> Option<usize> {
        self.labels.iter().position(|&l| l == label)
    }

    /// Eigenvalues of each m_F block, ascending.
    pub fn block_energies(&self) -> Vec<(HalfInt, Vec<f64>)> {
        let mut out: Vec<(HalfInt, Vec<f64>)> = Vec::new();
        for (i, e) in self.energies_mhz.iter().enumerate() {
            let mf = self.m_f(i);
            match out.iter_mut().find(|(m, _)| *m == mf) {
                Some((_, v)) => v.push(*e),
                None => out.push((mf, vec![*e])),
            }
        }
        for (_, v) in &mut out {
            v.sort_by(f64::total_cmp);
        }
        out.sort_by_key(|(m, _)| std::cmp::Reverse(*m));
        out
    }
}
