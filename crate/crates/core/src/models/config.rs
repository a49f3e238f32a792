use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use super::kernel::KernelBank;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Architecture {
    TfIdf,
    KernelPooling,
    Siamese,
    DssmLike,
    HybridLocal,
}

impl Architecture {
    pub const ALL: [Architecture; 5] = [
        Architecture::TfIdf,
        Architecture::KernelPooling,
        Architecture::Siamese,
        Architecture::DssmLike,
        Architecture::HybridLocal,
    ];

    pub fn tag(self) -> &'static str {
        match self {
            Architecture::TfIdf => "tfidf",
            Architecture::KernelPooling => "kernel_pooling",
            Architecture::Siamese => "siamese",
            Architecture::DssmLike => "dssm_like",
            Architecture::HybridLocal => "hybrid_local",
        }
    }

    /// Whether the model scores through a query–document interaction matrix.
    pub fn is_local(self) -> bool {
        matches!(
            self,
            Architecture::KernelPooling | Architecture::HybridLocal
        )
    }

    pub fn is_distributed(self) -> bool {
        matches!(self, Architecture::Siamese | Architecture::DssmLike)
    }
}

impl fmt::Display for Architecture {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.tag())
    }
}

impl FromStr for Architecture {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Architecture::ALL
            .into_iter()
            .find(|a| a.tag() == s)
            .ok_or_else(|| Error::invalid(format!("unknown architecture {s:?}")))
    }
}

/// Output nonlinearity of the scalar heads (kernel pooling, hybrid).
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Head {
    Tanh,
    Linear,
}

/// Hyper-parameters fixing every weight shape of a trainable model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelConfig {
    pub architecture: Architecture,
    pub dim: usize,
    pub n_q: usize,
    pub n_d: usize,
    pub kernels: KernelBank,
    /// Encoding size `dim(V)` of the distributed family; also the cnn channel
    /// count of the siamese encoder.
    pub repr_dim: usize,
    /// Hidden width of the dssm_like mlp₃.
    pub hidden: usize,
    /// Channel count of the hybrid convolution.
    pub channels: usize,
    pub window: usize,
    pub head: Head,
}

impl ModelConfig {
    pub fn new(architecture: Architecture, dim: usize) -> Self {
        ModelConfig {
            architecture,
            dim,
            n_q: 10,
            n_d: 64,
            kernels: KernelBank::default(),
            repr_dim: 64,
            hidden: 64,
            channels: 16,
            window: 3,
            head: Head::Tanh,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("dim", self.dim),
            ("Nq", self.n_q),
            ("Nd", self.n_d),
            ("V", self.repr_dim),
            ("H", self.hidden),
            ("C", self.channels),
            ("w", self.window),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::invalid(format!("{name} must be positive")));
            }
        }
        Ok(())
    }
}

fn fmt_list(v: &[f64]) -> String {
    v.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join("|")
}

impl fmt::Display for ModelConfig {
    /// The architecture descriptor stored in checkpoints, e.g.
    /// `kernel_pooling:K=11,dim=50,Nq=10,Nd=64`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:", self.architecture)?;
        let base = format!("dim={},Nq={},Nd={}", self.dim, self.n_q, self.n_d);
        let head = match self.head {
            Head::Tanh => "",
            Head::Linear => ",head=linear",
        };
        match self.architecture {
            Architecture::TfIdf => write!(f, "{base}"),
            Architecture::KernelPooling => {
                write!(f, "K={},{base}{head}", self.kernels.len())?;
                if self.kernels != KernelBank::default() {
                    write!(
                        f,
                        ",mu={},sigma={}",
                        fmt_list(self.kernels.means()),
                        fmt_list(self.kernels.widths())
                    )?;
                }
                Ok(())
            }
            Architecture::Siamese => write!(f, "{base},V={},w={}", self.repr_dim, self.window),
            Architecture::DssmLike => write!(f, "{base},V={},H={}", self.repr_dim, self.hidden),
            Architecture::HybridLocal => {
                write!(f, "{base},C={},w={}{head}", self.channels, self.window)
            }
        }
    }
}

impl FromStr for ModelConfig {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (arch, rest) = s.split_once(':').unwrap_or((s, ""));
        let architecture: Architecture = arch.parse()?;
        let mut fields = BTreeMap::new();
        for item in rest.split(',').filter(|x| !x.is_empty()) {
            let (k, v) = item
                .split_once('=')
                .ok_or_else(|| Error::invalid(format!("descriptor field {item:?} lacks '='")))?;
            if fields.insert(k, v).is_some() {
                return Err(Error::invalid(format!("descriptor repeats {k}")));
            }
        }
        let mut take = |key: &str| fields.remove(key);
        let num = |key: &str, v: Option<&str>| -> Result<Option<usize>> {
            v.map(|v| {
                v.parse().map_err(|_| {
                    Error::invalid(format!("descriptor {key}={v:?} is not an integer"))
                })
            })
            .transpose()
        };

        let dim = num("dim", take("dim"))?.ok_or_else(|| Error::invalid("descriptor lacks dim"))?;
        let mut cfg = ModelConfig::new(architecture, dim);
        if let Some(v) = num("Nq", take("Nq"))? {
            cfg.n_q = v;
        }
        if let Some(v) = num("Nd", take("Nd"))? {
            cfg.n_d = v;
        }
        if let Some(v) = num("V", take("V"))? {
            cfg.repr_dim = v;
        }
        if let Some(v) = num("H", take("H"))? {
            cfg.hidden = v;
        }
        if let Some(v) = num("C", take("C"))? {
            cfg.channels = v;
        }
        if let Some(v) = num("w", take("w"))? {
            cfg.window = v;
        }
        match take("head") {
            None | Some("tanh") => {}
            Some("linear") => cfg.head = Head::Linear,
            Some(other) => return Err(Error::invalid(format!("unknown head {other:?}"))),
        }
        let k = num("K", take("K"))?;
        let list = |v: &str| -> Result<Vec<f64>> {
            v.split('|')
                .map(|x| {
                    x.parse()
                        .map_err(|_| Error::invalid(format!("bad kernel value {x:?}")))
                })
                .collect()
        };
        match (take("mu"), take("sigma")) {
            (Some(mu), Some(sigma)) => cfg.kernels = KernelBank::new(list(mu)?, list(sigma)?)?,
            (None, None) => {}
            _ => return Err(Error::invalid("descriptor needs both mu and sigma")),
        }
        if let Some(k) = k {
            if k != cfg.kernels.len() {
                return Err(Error::invalid(format!(
                    "descriptor K={k} but bank has {} kernels",
                    cfg.kernels.len()
                )));
            }
        }
        if let Some(key) = fields.keys().next() {
            return Err(Error::invalid(format!("unknown descriptor field {key:?}")));
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn descriptor_round_trip() {
        for arch in Architecture::ALL {
            let mut cfg = ModelConfig::new(arch, 50);
            cfg.n_q = 7;
            let text = cfg.to_string();
            assert_eq!(text.parse::<ModelConfig>().unwrap(), cfg, "{text}");
        }
        let cfg: ModelConfig = "kernel_pooling:K=11,dim=50,Nq=10,Nd=64".parse().unwrap();
        assert_eq!(cfg.to_string(), "kernel_pooling:K=11,dim=50,Nq=10,Nd=64");

        let mut custom = ModelConfig::new(Architecture::KernelPooling, 8);
        custom.kernels = KernelBank::new(vec![1.0, 0.25], vec![0.001, 0.3]).unwrap();
        custom.head = Head::Linear;
        assert_eq!(custom.to_string().parse::<ModelConfig>().unwrap(), custom);
    }

    #[test]
    fn descriptor_errors() {
        for bad in [
            "bm25:dim=3",
            "siamese:Nq=3",
            "siamese:dim=x",
            "siamese:dim=3,foo=1",
            "siamese:dim=3,dim=4",
            "kernel_pooling:K=5,dim=3",
            "kernel_pooling:dim=3,mu=1",
            "siamese:dim=0",
            "hybrid_local:dim=3,head=relu",
        ] {
            assert!(bad.parse::<ModelConfig>().is_err(), "{bad}");
        }
    }
}
