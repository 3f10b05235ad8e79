use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};
use crate::sade::validate_kernels;

macro_rules! keyword_enum {
    ($(#[$m:meta])* $name:ident { $($variant:ident => $text:literal),+ $(,)? }) => {
        $(#[$m])*
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
        pub enum $name { $($variant),+ }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self { $($name::$variant => $text),+ }
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
                        concat!("unknown ", stringify!($name), " `{}` (expected one of: {})"),
                        other,
                        [$($text),+].join(", ")
                    ))),
                }
            }
        }
    };
}

keyword_enum!(
    Variant {
        CiseaSade => "cisea_sade",
        CiseaEece => "cisea_eece",
        CiMrfe => "ci_mrfe",
        CiseaMrfe => "cisea_mrfe",
    }
);

keyword_enum!(
    /// How the local and contextual streams are combined.
    Fusion {
        Sequential => "sequential",
        AttentionStack => "attention_stack",
        Summation => "summation",
    }
);

keyword_enum!(
    /// Local feature extractor feeding the contextual encoder.
    LocalEncoder {
        Depthwise => "depthwise",
        StandardConv => "standard_conv",
    }
);

keyword_enum!(
    /// Vector handed to the classifier from the contextual encoder.
    HeadInput {
        MaxPool => "max_pool",
        Context => "context",
    }
);

/// Kernel size of the standard convolution that replaces the depthwise
/// encoder in the ablation.
pub const STANDARD_CONV_KERNEL: usize = 3;

#[derive(Clone, Debug, PartialEq)]
pub struct ModelConfig {
    pub variant: Variant,
    pub use_ci: bool,
    pub use_sea: bool,
    pub kernels: Vec<usize>,
    pub fusion: Fusion,
    pub local_encoder: LocalEncoder,
    pub head_input: HeadInput,
    /// Embedding width.
    pub d: usize,
    /// Pointwise output channels.
    pub c: usize,
    /// BiLSTM hidden size per direction.
    pub h: usize,
    pub d_a: usize,
    /// Common width of the two projected streams in parallel fusion.
    pub fusion_width: usize,
    pub emotions: usize,
    pub classes: usize,
    pub max_len: usize,
    pub vocab_size: usize,
    pub dropout: f64,
    pub gate_on: bool,
    /// Embeddings come from a contextual file instead of a table.
    pub contextual: bool,
    /// Domain tag for the instruction directive.
    pub domain: String,
}

impl Default for ModelConfig {
    fn default() -> Self {
        ModelConfig {
            variant: Variant::CiseaMrfe,
            use_ci: true,
            use_sea: true,
            kernels: vec![1, 3, 5, 7],
            fusion: Fusion::Sequential,
            local_encoder: LocalEncoder::Depthwise,
            head_input: HeadInput::MaxPool,
            d: 32,
            c: 32,
            h: 32,
            d_a: 16,
            fusion_width: 32,
            emotions: 8,
            classes: 2,
            max_len: 64,
            vocab_size: 5000,
            dropout: 0.1,
            gate_on: true,
            contextual: false,
            domain: "movie".into(),
        }
    }
}

impl ModelConfig {
    pub fn for_variant(variant: Variant) -> Self {
        let mut c = ModelConfig {
            variant,
            ..ModelConfig::default()
        };
        if variant == Variant::CiMrfe {
            c.use_sea = false;
        }
        c
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.classes < 2 {
            return bad(format!("need at least 2 classes, got {}", self.classes));
        }
        if self.variant == Variant::CiMrfe && self.use_sea {
            return bad("variant ci_mrfe excludes augmentation (use_sea=false)".into());
        }
        validate_kernels(&self.kernels)?;
        for (k, v) in [
            ("d", self.d),
            ("c", self.c),
            ("h", self.h),
            ("d_a", self.d_a),
            ("fusion_width", self.fusion_width),
            ("emotions", self.emotions),
        ] {
            if v == 0 {
                return bad(format!("{k} must be positive"));
            }
        }
        if self.max_len < 3 {
            return bad(format!("max_len must be at least 3, got {}", self.max_len));
        }
        if !self.contextual && self.vocab_size < 5 {
            return bad(format!("vocab_size must be at least 5, got {}", self.vocab_size));
        }
        if !(0.0..1.0).contains(&self.dropout) {
            return bad(format!("dropout must lie in [0, 1), got {}", self.dropout));
        }
        Ok(())
    }

    pub fn has_local(&self) -> bool {
        self.variant != Variant::CiseaEece
    }

    pub fn has_eece(&self) -> bool {
        self.variant != Variant::CiseaSade
    }

    /// Both streams present and combined by a parallel fusion.
    pub fn parallel_fusion(&self) -> bool {
        self.has_local() && self.has_eece() && self.fusion != Fusion::Sequential
    }

    /// BiLSTM input width.
    pub fn eece_input(&self) -> usize {
        if self.has_local() && self.fusion == Fusion::Sequential {
            self.c
        } else {
            self.d
        }
    }

    pub fn head_width(&self) -> usize {
        if self.parallel_fusion() {
            self.fusion_width
        } else if self.has_eece() {
            2 * self.h
        } else {
            self.c
        }
    }

    /// Flat `key=value` pairs in a fixed order.
    pub fn to_pairs(&self) -> Vec<(&'static str, String)> {
        let ks = self.kernels.iter().map(usize::to_string).collect::<Vec<_>>().join(",");
        vec![
            ("variant", self.variant.to_string()),
            ("use_ci", self.use_ci.to_string()),
            ("use_sea", self.use_sea.to_string()),
            ("kernels", ks),
            ("fusion", self.fusion.to_string()),
            ("local_encoder", self.local_encoder.to_string()),
            ("head_input", self.head_input.to_string()),
            ("d", self.d.to_string()),
            ("c", self.c.to_string()),
            ("h", self.h.to_string()),
            ("d_a", self.d_a.to_string()),
            ("fusion_width", self.fusion_width.to_string()),
            ("emotions", self.emotions.to_string()),
            ("classes", self.classes.to_string()),
            ("max_len", self.max_len.to_string()),
            ("vocab_size", self.vocab_size.to_string()),
            ("dropout", self.dropout.to_string()),
            ("gate_on", self.gate_on.to_string()),
            ("contextual", self.contextual.to_string()),
            ("domain", self.domain.clone()),
        ]
    }

    /// Sets one key; returns `Ok(false)` when the key is not a model key.
    pub fn set(&mut self, key: &str, value: &str) -> Result<bool> {
        let v = value.trim();
        match key {
            "variant" => {
                self.variant = v.parse()?;
                if self.variant == Variant::CiMrfe {
                    self.use_sea = false;
                }
            }
            "use_ci" => self.use_ci = parse_value(key, v)?,
            "use_sea" => self.use_sea = parse_value(key, v)?,
            "kernels" => self.kernels = crate::sade::parse_kernels(v)?,
            "fusion" => self.fusion = v.parse()?,
            "local_encoder" => self.local_encoder = v.parse()?,
            "head_input" => self.head_input = v.parse()?,
            "d" => self.d = parse_value(key, v)?,
            "c" => self.c = parse_value(key, v)?,
            "h" => self.h = parse_value(key, v)?,
            "d_a" => self.d_a = parse_value(key, v)?,
            "fusion_width" => self.fusion_width = parse_value(key, v)?,
            "emotions" => self.emotions = parse_value(key, v)?,
            "classes" => self.classes = parse_value(key, v)?,
            "max_len" => self.max_len = parse_value(key, v)?,
            "vocab_size" => self.vocab_size = parse_value(key, v)?,
            "dropout" => self.dropout = parse_value(key, v)?,
            "gate_on" => self.gate_on = parse_value(key, v)?,
            "contextual" => self.contextual = parse_value(key, v)?,
            "domain" => self.domain = v.to_string(),
            _ => return Ok(false),
        }
        Ok(true)
    }

    pub fn to_text(&self) -> String {
        self.to_pairs().into_iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut cfg = ModelConfig::default();
        for (i, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (k, v) = line.split_once('=').ok_or_else(|| Error::Parse {
                line: i + 1,
                msg: format!("expected key=value, got `{line}`"),
            })?;
            if !cfg.set(k.trim(), v)? {
                return Err(Error::Parse {
                    line: i + 1,
                    msg: format!("unknown key `{}`", k.trim()),
                });
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Parses one config value, naming the key on failure.
pub fn parse_value<V: FromStr>(key: &str, v: &str) -> Result<V> {
    v.parse()
        .map_err(|_| Error::Config(format!("bad value `{v}` for `{key}`")))
}
