use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

macro_rules! string_enum {
    ($(#[$meta:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$meta])*
        #[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $text),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = Error;

            fn from_str(s: &str) -> Result<Self> {
                match s.trim() {
                    $($text => Ok($name::$variant),)+
                    other => Err(Error::Config(format!(
                        "unknown {} {other:?}; expected one of: {}",
                        stringify!($name),
                        [$($text),+].join(", ")
                    ))),
                }
            }
        }
    };
}

string_enum!(
    /// How neighbor timestamps enter the token matrix.
    TimeMode {
        RelativeEncoded => "relative_encoded",
        RelativeRaw => "relative_raw",
        AbsoluteRaw => "absolute_raw",
        AbsoluteEncoded => "absolute_encoded",
    }
);

string_enum!(
    NeighborMode {
        Recent1Hop => "recent_1hop",
        Uniform1Hop => "uniform_1hop",
        Recent2Hop => "recent_2hop",
        Uniform2Hop => "uniform_2hop",
    }
);

string_enum!(
    /// Which encoders feed the classifier.
    Variant {
        Full => "full",
        LinkOnly => "link_only",
        NodeOnly => "node_only",
    }
);

string_enum!(
    /// Link-encoder backbone: the mixer, or one of the self-attention replacements.
    LinkEncoderKind {
        Mixer => "mixer",
        AttnFullSum => "attn_full_sum",
        AttnFullMean => "attn_full_mean",
        AttnOneHopSum => "attn_1hop_sum",
        AttnOneHopMean => "attn_1hop_mean",
    }
);

string_enum!(
    TimeEncoderKind {
        Fixed => "fixed",
        Trainable => "trainable",
    }
);

impl TimeMode {
    pub fn is_relative(self) -> bool {
        matches!(self, TimeMode::RelativeEncoded | TimeMode::RelativeRaw)
    }

    pub fn is_encoded(self) -> bool {
        matches!(self, TimeMode::RelativeEncoded | TimeMode::AbsoluteEncoded)
    }
}

impl Variant {
    pub fn uses_link(self) -> bool {
        matches!(self, Variant::Full | Variant::LinkOnly)
    }

    pub fn uses_node(self) -> bool {
        matches!(self, Variant::Full | Variant::NodeOnly)
    }
}

/// Attention scope and pooling.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AttentionScope {
    Full,
    OneHop,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Pooling {
    Sum,
    Mean,
}

impl LinkEncoderKind {
    pub fn attention(self) -> Option<(AttentionScope, Pooling)> {
        match self {
            LinkEncoderKind::Mixer => None,
            LinkEncoderKind::AttnFullSum => Some((AttentionScope::Full, Pooling::Sum)),
            LinkEncoderKind::AttnFullMean => Some((AttentionScope::Full, Pooling::Mean)),
            LinkEncoderKind::AttnOneHopSum => Some((AttentionScope::OneHop, Pooling::Sum)),
            LinkEncoderKind::AttnOneHopMean => Some((AttentionScope::OneHop, Pooling::Mean)),
        }
    }
}

/// Model hyperparameters.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphMixerConfig {
    /// Token rows: the recent-neighbor cap.
    pub k: usize,
    /// Node-encoder window length.
    pub window: f64,
    pub d_time: usize,
    pub d_hidden: usize,
    pub alpha: f64,
    pub beta: f64,
    pub time_mode: TimeMode,
    pub neighbor_mode: NeighborMode,
    pub undirected: bool,
    pub variant: Variant,
    pub link_encoder: LinkEncoderKind,
    pub time_encoder: TimeEncoderKind,
    /// Token-MLP width; `None` means `max(1, k / 2)`.
    pub token_hidden: Option<usize>,
    /// Channel-MLP width; `None` means `4 · channels`.
    pub channel_hidden: Option<usize>,
    /// Seed for the sampled neighbor modes.
    pub sample_seed: u64,
}

impl Default for GraphMixerConfig {
    fn default() -> Self {
        Self {
            k: 10,
            window: 1.0,
            d_time: 100,
            d_hidden: 100,
            alpha: 10.0,
            beta: 10.0,
            time_mode: TimeMode::RelativeEncoded,
            neighbor_mode: NeighborMode::Recent1Hop,
            undirected: true,
            variant: Variant::Full,
            link_encoder: LinkEncoderKind::Mixer,
            time_encoder: TimeEncoderKind::Fixed,
            token_hidden: None,
            channel_hidden: None,
            sample_seed: 0,
        }
    }
}

impl GraphMixerConfig {
    /// Sets `d_time` and the matching `α = β = √d_time`.
    pub fn with_time_dim(mut self, d_time: usize) -> Self {
        let s = (d_time as f64).sqrt();
        self.d_time = d_time;
        self.alpha = s;
        self.beta = s;
        self
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.k == 0 {
            return bad("k must be ≥ 1".into());
        }
        if !(self.window > 0.0 && self.window.is_finite()) {
            return bad(format!("window must be > 0, got {}", self.window));
        }
        if self.d_time == 0 || self.d_hidden == 0 {
            return bad("d_time and d_hidden must be ≥ 1".into());
        }
        if self.time_mode.is_encoded() && !(self.alpha > 1.0 && self.beta > 0.0) {
            return bad(format!(
                "need alpha > 1 and beta > 0, got alpha={} beta={}",
                self.alpha, self.beta
            ));
        }
        if self.token_hidden == Some(0) || self.channel_hidden == Some(0) {
            return bad("mixer hidden widths must be ≥ 1".into());
        }
        Ok(())
    }

    pub fn channels(&self, d_link: usize) -> usize {
        self.d_time + d_link
    }

    pub fn token_hidden_dim(&self) -> usize {
        self.token_hidden.unwrap_or((self.k / 2).max(1))
    }

    pub fn channel_hidden_dim(&self, d_link: usize) -> usize {
        self.channel_hidden.unwrap_or(4 * self.channels(d_link))
    }

    /// Width of one node representation `h_i`.
    pub fn node_repr_dim(&self) -> usize {
        match self.variant {
            Variant::Full => 2 * self.d_hidden,
            Variant::LinkOnly | Variant::NodeOnly => self.d_hidden,
        }
    }

    /// `key=value` pairs for manifests and checkpoints.
    pub fn to_pairs(&self) -> Vec<(String, String)> {
        let opt = |v: Option<usize>| v.map_or_else(|| "auto".to_string(), |x| x.to_string());
        vec![
            ("k".into(), self.k.to_string()),
            ("window".into(), format!("{:?}", self.window)),
            ("d_time".into(), self.d_time.to_string()),
            ("d_hidden".into(), self.d_hidden.to_string()),
            ("alpha".into(), format!("{:?}", self.alpha)),
            ("beta".into(), format!("{:?}", self.beta)),
            ("time_mode".into(), self.time_mode.to_string()),
            ("neighbor_mode".into(), self.neighbor_mode.to_string()),
            ("undirected".into(), self.undirected.to_string()),
            ("variant".into(), self.variant.to_string()),
            ("encoder".into(), self.link_encoder.to_string()),
            ("time_encoder".into(), self.time_encoder.to_string()),
            ("token_hidden".into(), opt(self.token_hidden)),
            ("channel_hidden".into(), opt(self.channel_hidden)),
            ("sample_seed".into(), self.sample_seed.to_string()),
        ]
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn enum_names_roundtrip() {
        for m in TimeMode::ALL {
            assert_eq!(m.as_str().parse::<TimeMode>().unwrap(), *m);
        }
        for m in LinkEncoderKind::ALL {
            assert_eq!(m.to_string().parse::<LinkEncoderKind>().unwrap(), *m);
        }
        assert!("sideways".parse::<NeighborMode>().is_err());
    }

    #[test]
    fn default_widths() {
        let c = GraphMixerConfig {
            k: 30,
            ..Default::default()
        };
        assert_eq!(c.token_hidden_dim(), 15);
        assert_eq!(c.channel_hidden_dim(172), 4 * 272);
        let c1 = GraphMixerConfig {
            k: 1,
            ..Default::default()
        };
        assert_eq!(c1.token_hidden_dim(), 1);
    }

    #[test]
    fn validation() {
        assert!(GraphMixerConfig::default().validate().is_ok());
        let bad = GraphMixerConfig {
            k: 0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
        let bad = GraphMixerConfig {
            window: 0.0,
            ..Default::default()
        };
        assert!(bad.validate().is_err());
    }
}
