use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Activation;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AgentConfig {
    pub embed_dim: usize,
    pub conv_channels: Vec<usize>,
    pub kernel: usize,
    pub hidden_dim: usize,
    pub lstm: bool,
    pub lstm_size: usize,
    pub use_full_map: bool,
    pub crop_size: usize,
    pub n_actions: usize,
    pub activation: Activation,
    /// Full-map stream input size `(rows, cols)`.
    pub map_dims: (usize, usize),
}

impl Default for AgentConfig {
    fn default() -> Self {
        Self::experiment3()
    }
}

impl AgentConfig {
    /// Full map plus 9×9 crop, eight actions, no recurrence.
    pub fn experiment1() -> Self {
        Self {
            embed_dim: 64,
            conv_channels: vec![16, 16, 16, 16, 8],
            kernel: 3,
            hidden_dim: 256,
            lstm: false,
            lstm_size: 512,
            use_full_map: true,
            crop_size: 9,
            n_actions: 8,
            activation: Activation::Elu,
            map_dims: (21, 79),
        }
    }

    /// 5×5 crop only, four actions, LSTM.
    pub fn experiment2() -> Self {
        Self {
            lstm: true,
            use_full_map: false,
            crop_size: 5,
            n_actions: 4,
            ..Self::experiment1()
        }
    }

    /// 3×3 crop only, four actions, LSTM.
    pub fn experiment3() -> Self {
        Self {
            crop_size: 3,
            ..Self::experiment2()
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(format!("agent.{m}")));
        if self.kernel != 3 {
            return bad("kernel: only 3x3 kernels are supported");
        }
        if self.conv_channels.is_empty() || self.conv_channels.contains(&0) {
            return bad("conv_channels must be non-empty and positive");
        }
        if ![3, 5, 9].contains(&self.crop_size) {
            return bad("crop_size must be 3, 5 or 9");
        }
        if self.n_actions < 2 {
            return bad("n_actions must be at least 2");
        }
        if self.embed_dim == 0 || self.hidden_dim == 0 || (self.lstm && self.lstm_size == 0) {
            return bad("dimensions must be positive");
        }
        Ok(())
    }

    fn last_channels(&self) -> usize {
        *self.conv_channels.last().expect("validated")
    }

    pub fn crop_features(&self) -> usize {
        self.last_channels() * self.crop_size * self.crop_size
    }

    pub fn map_features(&self) -> usize {
        if self.use_full_map {
            self.last_channels() * self.map_dims.0 * self.map_dims.1
        } else {
            0
        }
    }

    /// Width of the representation the heads read.
    pub fn core_dim(&self) -> usize {
        if self.lstm {
            self.lstm_size
        } else {
            self.hidden_dim
        }
    }

    /// Spatial plane of the stream whose conv outputs are exposed as taps.
    fn tap_plane(&self) -> usize {
        if self.use_full_map {
            self.map_dims.0 * self.map_dims.1
        } else {
            self.crop_size * self.crop_size
        }
    }

    /// Available taps and their vector lengths, in network order.
    pub fn tap_dims(&self) -> Vec<(String, usize)> {
        let plane = self.tap_plane();
        let mut taps: Vec<(String, usize)> = self
            .conv_channels
            .iter()
            .enumerate()
            .map(|(i, &c)| (format!("conv{}", i + 1), c * plane))
            .collect();
        taps.push(("linear1".into(), self.hidden_dim));
        taps.push(("linear2".into(), self.hidden_dim));
        if self.lstm {
            taps.push(("lstm_hidden".into(), self.lstm_size));
            taps.push(("lstm_cell".into(), self.lstm_size));
        }
        taps
    }

    pub fn tap_dim(&self, name: &str) -> Result<usize> {
        let taps = self.tap_dims();
        taps.iter()
            .find(|(n, _)| n == name)
            .map(|(_, d)| *d)
            .ok_or_else(|| Error::UnknownTap {
                name: name.into(),
                valid: taps.iter().map(|(n, _)| n.as_str()).collect::<Vec<_>>().join(", "),
            })
    }
}
