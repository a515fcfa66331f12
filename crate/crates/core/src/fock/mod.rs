//! Truncated ladder operators and their embedding into the
//! transmon ⊗ aux ⊗ reservoir product space.

mod operator;

pub use operator::Operator;

use faer::c64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Level counts for the three subsystems.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TruncationConfig {
    pub n_t: usize,
    pub n_a: usize,
    pub n_r: usize,
}

impl Default for TruncationConfig {
    fn default() -> Self {
        Self { n_t: 3, n_a: 3, n_r: 30 }
    }
}

impl TruncationConfig {
    pub fn new(n_t: usize, n_a: usize, n_r: usize) -> Result<Self> {
        let cfg = Self { n_t, n_a, n_r };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        for (name, n) in [("n_t", self.n_t), ("n_a", self.n_a), ("n_r", self.n_r)] {
            if n < 2 {
                return Err(Error::Dimension(format!("{name} = {n}, need at least 2 levels")));
            }
        }
        Ok(())
    }

    /// Total Hilbert-space dimension.
    pub fn dim(&self) -> usize {
        self.n_t * self.n_a * self.n_r
    }

    pub fn levels(&self, slot: Slot) -> usize {
        match slot {
            Slot::Transmon => self.n_t,
            Slot::Aux => self.n_a,
            Slot::Reservoir => self.n_r,
        }
    }

    /// Flat index of the product state |q, n_a, n_r⟩.
    pub fn index(&self, q: usize, n_a: usize, n_r: usize) -> usize {
        (q * self.n_a + n_a) * self.n_r + n_r
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Slot {
    Transmon,
    Aux,
    Reservoir,
}

impl Slot {
    pub const ALL: [Slot; 3] = [Slot::Transmon, Slot::Aux, Slot::Reservoir];
}

/// Annihilation operator on `n` levels: ⟨k-1|a|k⟩ = √k.
pub fn annihilation(n: usize) -> Result<Operator> {
    if n < 2 {
        return Err(Error::Dimension(format!("ladder operator needs n >= 2, got {n}")));
    }
    Ok(Operator::from_triplets(n, n, (1..n).map(|k| (k - 1, k, c64::new((k as f64).sqrt(), 0.0)))))
}

pub fn creation(n: usize) -> Result<Operator> {
    Ok(annihilation(n)?.adjoint())
}

/// Number operator diag(0, 1, ..., n-1).
pub fn number(n: usize) -> Result<Operator> {
    if n < 2 {
        return Err(Error::Dimension(format!("number operator needs n >= 2, got {n}")));
    }
    Ok(Operator::diagonal(&(0..n).map(|k| c64::new(k as f64, 0.0)).collect::<Vec<_>>()))
}

/// Kronecker-embeds a single-subsystem operator into the full space.
pub fn embed(op: &Operator, slot: Slot, cfg: &TruncationConfig) -> Result<Operator> {
    let n = cfg.levels(slot);
    if !op.is_square() || op.nrows() != n {
        return Err(Error::Dimension(format!(
            "{:?} slot has {n} levels but operator is {}x{}",
            slot,
            op.nrows(),
            op.ncols()
        )));
    }
    let id = |m| Operator::identity(m);
    Ok(match slot {
        Slot::Transmon => op.kron(&id(cfg.n_a * cfg.n_r)),
        Slot::Aux => id(cfg.n_t).kron(&op.kron(&id(cfg.n_r))),
        Slot::Reservoir => id(cfg.n_t * cfg.n_a).kron(op),
    })
}

/// The three embedded annihilation operators of a configuration.
#[derive(Debug, Clone)]
pub struct Ladders {
    pub b: Operator,
    pub a_a: Operator,
    pub a_r: Operator,
}

impl Ladders {
    pub fn new(cfg: &TruncationConfig) -> Result<Self> {
        cfg.validate()?;
        Ok(Self {
            b: embed(&annihilation(cfg.n_t)?, Slot::Transmon, cfg)?,
            a_a: embed(&annihilation(cfg.n_a)?, Slot::Aux, cfg)?,
            a_r: embed(&annihilation(cfg.n_r)?, Slot::Reservoir, cfg)?,
        })
    }

    pub fn get(&self, slot: Slot) -> &Operator {
        match slot {
            Slot::Transmon => &self.b,
            Slot::Aux => &self.a_a,
            Slot::Reservoir => &self.a_r,
        }
    }

    /// Embedded number operator `a†a` of a slot.
    pub fn number(&self, slot: Slot) -> Operator {
        let a = self.get(slot);
        a.adjoint().matmul(a)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn c(x: f64) -> c64 {
        c64::new(x, 0.0)
    }

    #[test]
    fn two_level_ladder() {
        let a = annihilation(2).unwrap();
        assert_eq!(a.to_dense()[(0, 1)], c(1.0));
        assert_eq!(a.nnz(), 1);
    }

    #[test]
    fn three_level_ladder() {
        let a = annihilation(3).unwrap();
        assert_eq!(a.get(0, 1), c(1.0));
        assert!((a.get(1, 2).re - 2f64.sqrt()).abs() < 1e-15);
        assert_eq!(a.nnz(), 2);
    }

    #[test]
    fn truncated_commutator_defect_sits_on_top_level() {
        let a = annihilation(4).unwrap();
        let comm = a.commutator(&a.adjoint());
        for i in 0..4 {
            for j in 0..4 {
                let want = match (i, j) {
                    (3, 3) => -3.0,
                    _ if i == j => 1.0,
                    _ => 0.0,
                };
                assert!((comm.get(i, j) - c(want)).norm() < 1e-14, "({i},{j})");
            }
        }
    }

    #[test]
    fn too_small_is_rejected() {
        assert!(matches!(annihilation(1), Err(Error::Dimension(_))));
        assert!(TruncationConfig::new(3, 1, 5).is_err());
    }

    #[test]
    fn identity_embeds_to_identity() {
        let cfg = TruncationConfig::new(2, 3, 4).unwrap();
        for slot in Slot::ALL {
            let e = embed(&Operator::identity(cfg.levels(slot)), slot, &cfg).unwrap();
            assert_eq!(e, Operator::identity(cfg.dim()));
        }
    }

    #[test]
    fn disjoint_slots_commute() {
        let cfg = TruncationConfig::new(3, 3, 5).unwrap();
        let l = Ladders::new(&cfg).unwrap();
        assert_eq!(l.a_r.commutator(&l.a_a).max_abs(), 0.0);
        assert_eq!(l.a_r.commutator(&l.a_a.adjoint()).max_abs(), 0.0);
    }

    #[test]
    fn reservoir_number_trace() {
        let cfg = TruncationConfig::new(3, 2, 7).unwrap();
        let n = embed(&number(7).unwrap(), Slot::Reservoir, &cfg).unwrap();
        let expect = (3 * 2 * (0..7).sum::<usize>()) as f64;
        assert!((n.trace() - c(expect)).norm() < 1e-12);
    }

    #[test]
    fn dimension_mismatch_is_an_error() {
        let cfg = TruncationConfig::default();
        assert!(embed(&annihilation(4).unwrap(), Slot::Aux, &cfg).is_err());
    }

    #[test]
    fn index_matches_kron_layout() {
        let cfg = TruncationConfig::new(3, 2, 4).unwrap();
        let l = Ladders::new(&cfg).unwrap();
        // a_r |0,0,1> = |0,0,0>, b|1,0,0> = |0,0,0>
        assert_eq!(l.a_r.get(cfg.index(0, 0, 0), cfg.index(0, 0, 1)), c(1.0));
        assert_eq!(l.b.get(cfg.index(0, 0, 0), cfg.index(1, 0, 0)), c(1.0));
        assert_eq!(l.a_a.get(cfg.index(2, 0, 3), cfg.index(2, 1, 3)), c(1.0));
    }
}
