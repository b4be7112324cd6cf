//! Split-learning remote inference over a shared wireless uplink.
//!
//! Agents run the front of a trained network on their own views and the
//! parameter server finishes the inference. The [`split`] module rewrites the
//! aggregation layer so the server only needs the sum of the agents' outputs,
//! [`ota`] delivers that sum over the air in a number of channel uses that
//! does not depend on the agent count, and [`digital`] is the orthogonal
//! subcarrier baseline whose cost grows with every agent.

pub mod channel;
pub mod digital;
pub mod error;
pub mod experiment;
pub mod nn;
pub mod ota;
pub mod selftest;
pub mod split;

pub use channel::{
    draw_channel, global_alpha, noise_sample, power_factor, ChannelRealization, FadeMask,
    PowerFactor, RadioConfig,
};
pub use digital::{
    digital_round, run_budgeted, shannon_rate, upload_duration, BudgetLedger, BudgetedScheme,
    DigitalConfig, Upload, UploadOutcome,
};
pub use error::{Error, Result};
pub use nn::{Activation, DenseLayer, Network, Tensor};
pub use ota::{
    analog_inference, analog_round, apply_policy, channel_uses_analog, AnalogRoundResult,
    FadingPolicy,
};
pub use split::{make_split, AggregationSpec, CutOutputs, SplitNetwork};
