//! JSON interchange: tabulated codes, construction recipes and partition
//! recipes. Positions in every file are 1-based.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::code::{make_systematic, trivial_code, Alphabet, IdentityCode, TableCode, TreeCode};
use crate::constructions::EksParams;
use crate::error::{Error, Result};
use crate::partitions::{
    build_from_imm, chs_partition, eks_partition, ghk_partition, DeficiencyLedger, ImmKind,
    ImmediacySpec, LaminarPartition, LedgerEntry, PartitionFile,
};
use crate::rational::Q;

/// `{"n", "sigma_in", "sigma_out", "table"}` with labels in level order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TableFile {
    pub n: usize,
    pub sigma_in: u32,
    pub sigma_out: u64,
    pub table: Vec<u64>,
}

impl TableFile {
    pub fn from_code(code: &TableCode) -> Result<Self> {
        let sigma_out = code
            .output_alphabet()
            .size()
            .ok_or_else(|| Error::Format("output alphabet too large to serialize".into()))?;
        let sigma_in = code
            .input_alphabet()
            .size()
            .expect("table input alphabets are small") as u32;
        Ok(TableFile {
            n: code.n(),
            sigma_in,
            sigma_out,
            table: code.labels().to_vec(),
        })
    }

    pub fn into_code(self) -> Result<TableCode> {
        TableCode::new(
            self.n,
            self.sigma_in,
            Alphabet::new(self.sigma_out)?,
            self.table,
        )
    }
}

fn two() -> u32 {
    2
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CodeRecipe {
    Trivial {
        n: usize,
    },
    Identity {
        n: usize,
        #[serde(default = "two")]
        q: u32,
    },
    /// Searches the block-code family from the seed.
    Eks {
        k: u32,
        #[serde(default)]
        b: Option<u32>,
        #[serde(with = "crate::rational::serde_q")]
        delta: Q,
        seed: u64,
        #[serde(default)]
        zeroed_rows: Vec<u32>,
    },
    /// A fully built construction, block codes included.
    EksParams(EksParams),
    Systematic {
        inner: Box<CodeSource>,
    },
}

/// Anything that describes a code.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CodeSource {
    Recipe(CodeRecipe),
    Table(TableFile),
}

impl CodeSource {
    pub fn load(&self) -> Result<Arc<dyn TreeCode>> {
        Ok(match self {
            CodeSource::Table(t) => Arc::new(t.clone().into_code()?),
            CodeSource::Recipe(r) => match r {
                CodeRecipe::Trivial { n } => Arc::new(trivial_code(*n)?),
                CodeRecipe::Identity { n, q } => Arc::new(IdentityCode::new(*n, *q)?),
                CodeRecipe::Eks { .. } => Arc::new(self.eks_params()?.expect("eks recipe").code()?),
                CodeRecipe::EksParams(p) => Arc::new(p.code()?),
                CodeRecipe::Systematic { inner } => Arc::new(make_systematic(inner.load()?)?),
            },
        })
    }

    /// The built construction behind an EKS recipe; `None` for other kinds.
    pub fn eks_params(&self) -> Result<Option<EksParams>> {
        match self {
            CodeSource::Recipe(CodeRecipe::Eks {
                k,
                b,
                delta,
                seed,
                zeroed_rows,
            }) => {
                let p = EksParams::build(*k, delta, *b, *seed)?;
                Ok(Some(if zeroed_rows.is_empty() {
                    p
                } else {
                    p.ablate(zeroed_rows)?
                }))
            }
            CodeSource::Recipe(CodeRecipe::EksParams(p)) => Ok(Some(p.clone())),
            _ => Ok(None),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ImmName {
    Exp,
    DoubleExp,
}

/// A named immediacy function or its values `Imm(0), Imm(1), …`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ImmChoice {
    Named(ImmName),
    Values(Vec<u64>),
}

impl ImmChoice {
    pub fn kind(&self) -> ImmKind {
        match self {
            ImmChoice::Named(ImmName::Exp) => ImmKind::Exp,
            ImmChoice::Named(ImmName::DoubleExp) => ImmKind::DoubleExp,
            ImmChoice::Values(v) => ImmKind::Custom(v.iter().map(|&x| x as u128).collect()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PartitionRecipe {
    ImmPartition {
        imm: ImmChoice,
        #[serde(with = "crate::rational::serde_q")]
        delta: Q,
        ell: usize,
        #[serde(default)]
        t: Option<u32>,
    },
    EksPartition {
        k: u32,
    },
    ChsPartition {
        m: usize,
        l1: u64,
        shift: i64,
    },
    GhkPartition {
        n: u64,
        m: u64,
        #[serde(with = "crate::rational::serde_q")]
        delta: Q,
    },
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum PartitionSource {
    Recipe(PartitionRecipe),
    File(PartitionFile),
}

impl PartitionSource {
    /// The partition, with the deficiency ledger the recipe carries, if any.
    pub fn load(&self) -> Result<(LaminarPartition, Option<DeficiencyLedger>)> {
        Ok(match self {
            PartitionSource::File(f) => (f.clone().into_partition()?, None),
            PartitionSource::Recipe(r) => match r {
                PartitionRecipe::ImmPartition { imm, delta, ell, t } => {
                    let spec = ImmediacySpec::new(imm.kind(), *delta, *t)?;
                    (build_from_imm(&spec, *ell)?, None)
                }
                PartitionRecipe::EksPartition { k } => (eks_partition(*k)?, None),
                PartitionRecipe::ChsPartition { m, l1, shift } => {
                    let (p, l) = chs_partition(*m, *l1 as u128, *shift)?;
                    (p, Some(l))
                }
                PartitionRecipe::GhkPartition { n, m, delta } => {
                    (ghk_partition(*n as u128, *m as u128, delta)?, None)
                }
            },
        })
    }
}

/// Reads a ledger given as `[{"level": i, "blocks": [...]}, ...]`.
pub fn ledger_from_json(p: &LaminarPartition, json: &str) -> Result<DeficiencyLedger> {
    let entries: Vec<LedgerEntry> = serde_json::from_str(json)?;
    DeficiencyLedger::from_entries(p, &entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::code::tabulate;
    use crate::code::Caps;
    use crate::rational::q;

    #[test]
    fn table_round_trip() {
        let c = tabulate(&trivial_code(3).unwrap(), &Caps::default()).unwrap();
        let f = TableFile::from_code(&c).unwrap();
        assert_eq!(f.table.len(), 14);
        let json = serde_json::to_string(&f).unwrap();
        let back: CodeSource = serde_json::from_str(&json).unwrap();
        let code = back.load().unwrap();
        for x in 0..8u32 {
            let m = [x >> 2, (x >> 1) & 1, x & 1];
            assert_eq!(code.encode(&m), c.encode(&m));
        }
    }

    #[test]
    fn recipes_parse() {
        let s: CodeSource =
            serde_json::from_str(r#"{"kind":"eks","k":2,"b":4,"delta":"1/2","seed":7}"#).unwrap();
        let p = s.eks_params().unwrap().unwrap();
        assert_eq!((p.k, p.b), (2, 4));
        assert_eq!(s.load().unwrap().n(), 4);

        let s: CodeSource =
            serde_json::from_str(r#"{"kind":"systematic","inner":{"kind":"identity","n":3}}"#)
                .unwrap();
        assert_eq!(s.load().unwrap().output_alphabet().size(), Some(4));

        let built = CodeSource::Recipe(CodeRecipe::EksParams(p.clone()));
        let json = serde_json::to_string(&built).unwrap();
        let back: CodeSource = serde_json::from_str(&json).unwrap();
        assert_eq!(back.eks_params().unwrap().unwrap(), p);

        assert!(serde_json::from_str::<CodeSource>(r#"{"kind":"nope"}"#).is_err());
    }

    #[test]
    fn partition_recipes() {
        let s: PartitionSource =
            serde_json::from_str(r#"{"kind":"imm_partition","imm":"exp","delta":"1/2","ell":2}"#)
                .unwrap();
        let (p, l) = s.load().unwrap();
        assert_eq!((p.n(), p.alpha(), l), (128, q(1, 8), None));

        let s: PartitionSource = serde_json::from_str(
            r#"{"kind":"imm_partition","imm":[1,2,4,8,16,32,64,128],"delta":"1/2","ell":2,"t":3}"#,
        )
        .unwrap();
        assert_eq!(s.load().unwrap().0.n(), 128);

        let s: PartitionSource =
            serde_json::from_str(r#"{"kind":"chs_partition","m":1,"l1":2,"shift":-1}"#).unwrap();
        let (p, l) = s.load().unwrap();
        assert_eq!(p.n(), 8);
        assert!(l.is_some());

        let file = PartitionFile::from_partition(&eks_partition(2).unwrap()).unwrap();
        let json = serde_json::to_string(&file).unwrap();
        let s: PartitionSource = serde_json::from_str(&json).unwrap();
        assert_eq!(s.load().unwrap().0, eks_partition(2).unwrap());

        let p = eks_partition(3).unwrap();
        let l = ledger_from_json(&p, r#"[{"level":3,"blocks":[0]}]"#).unwrap();
        assert_eq!(l.budget_used(), 8);
    }
}
