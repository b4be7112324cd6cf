//! Soft-layer decomposition of the aggregation layer.
//!
//! A centralised model feeds the concatenated cut-layer outputs of `M` agents
//! into an aggregation layer `a(sum_m z_m W^m + b)`. The split replaces it with
//! a zero-bias identity-activation layer at each agent (`soft_cut`, computing
//! `z_m W^m`) and a bias-plus-activation stage at the server (`ps_head`). The
//! server then only needs the element-wise sum of the agents' soft-cut
//! outputs, which is what an analog multiple-access channel delivers.

use rand::Rng;

use crate::error::{Error, Result};
use crate::nn::{Activation, DenseLayer, Network, Tensor};

/// Weights of the original aggregation layer, one `(N_D, N_A)` block per agent.
#[derive(Debug, Clone, PartialEq)]
pub struct AggregationSpec {
    per_agent_weights: Vec<Tensor>,
    bias: Tensor,
    activation: Activation,
}

impl AggregationSpec {
    pub fn new(
        per_agent_weights: Vec<Tensor>,
        bias: Tensor,
        activation: Activation,
    ) -> Result<Self> {
        let first = per_agent_weights.first().ok_or(Error::NoParticipants)?;
        if first.shape().len() != 2 {
            return Err(Error::Agent {
                agent: 0,
                detail: "weight block must be 2-D".into(),
            });
        }
        let shape = first.shape().to_vec();
        for (m, w) in per_agent_weights.iter().enumerate() {
            if w.shape() != shape.as_slice() {
                return Err(Error::Agent {
                    agent: m,
                    detail: format!("weight block shape {:?}, expected {:?}", w.shape(), shape),
                });
            }
        }
        if bias.shape() != [shape[1]] {
            return Err(Error::Shape {
                context: "aggregation bias",
                expected: shape[1],
                actual: bias.len(),
            });
        }
        Ok(Self {
            per_agent_weights,
            bias,
            activation,
        })
    }

    /// The same weight block for every agent.
    pub fn shared(
        weights: Tensor,
        bias: Tensor,
        activation: Activation,
        agents: usize,
    ) -> Result<Self> {
        Self::new(vec![weights; agents], bias, activation)
    }

    pub fn agents(&self) -> usize {
        self.per_agent_weights.len()
    }

    pub fn cut_width(&self) -> usize {
        self.per_agent_weights[0].shape()[0]
    }

    pub fn aggregation_width(&self) -> usize {
        self.per_agent_weights[0].shape()[1]
    }

    pub fn weights(&self, agent: usize) -> &Tensor {
        &self.per_agent_weights[agent]
    }

    pub fn bias(&self) -> &Tensor {
        &self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }
}

/// Server-side half of the aggregation layer: `a(I + b)`.
#[derive(Debug, Clone, PartialEq)]
pub struct PsHead {
    bias: Vec<f64>,
    activation: Activation,
}

impl PsHead {
    pub fn bias(&self) -> &[f64] {
        &self.bias
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    fn apply(&self, aggregate: &[f64]) -> Vec<f64> {
        let mut out: Vec<f64> = aggregate
            .iter()
            .zip(&self.bias)
            .map(|(i, b)| i + b)
            .collect();
        self.activation.apply(&mut out);
        out
    }
}

/// Soft-cut outputs `O^m` of every agent, all of length `N_A`.
#[derive(Debug, Clone, PartialEq)]
pub struct CutOutputs {
    outputs: Vec<Vec<f64>>,
}

impl CutOutputs {
    pub fn new(outputs: Vec<Vec<f64>>) -> Result<Self> {
        let width = outputs.first().ok_or(Error::NoParticipants)?.len();
        if width == 0 {
            return Err(Error::config("cut outputs must have at least one element"));
        }
        for (m, o) in outputs.iter().enumerate() {
            if o.len() != width {
                return Err(Error::Agent {
                    agent: m,
                    detail: format!("cut output length {}, expected {width}", o.len()),
                });
            }
            if o.iter().any(|v| !v.is_finite()) {
                return Err(Error::Agent {
                    agent: m,
                    detail: "non-finite cut output".into(),
                });
            }
        }
        Ok(Self { outputs })
    }

    pub fn agents(&self) -> usize {
        self.outputs.len()
    }

    pub fn width(&self) -> usize {
        self.outputs[0].len()
    }

    pub fn agent(&self, m: usize) -> &[f64] {
        &self.outputs[m]
    }

    /// Element-wise sum over agents, i.e. the ideal aggregation input.
    pub fn sum(&self) -> Vec<f64> {
        let mut total = vec![0.0; self.width()];
        for o in &self.outputs {
            total.iter_mut().zip(o).for_each(|(t, v)| *t += v);
        }
        total
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SplitNetwork {
    agent_segments: Vec<Network>,
    soft_cut: Vec<DenseLayer>,
    ps_head: PsHead,
    ps_tail: Network,
}

/// Splits the aggregation layer described by `agg` into per-agent soft-cut
/// layers and a server head. Agent `m` runs `agent_nets[m]` followed by its
/// soft cut.
pub fn make_split(
    agent_nets: Vec<Network>,
    agg: AggregationSpec,
    ps_tail: Network,
) -> Result<SplitNetwork> {
    if agent_nets.len() != agg.agents() {
        return Err(Error::Shape {
            context: "agent networks vs aggregation blocks",
            expected: agg.agents(),
            actual: agent_nets.len(),
        });
    }
    let cut_width = agg.cut_width();
    for (m, net) in agent_nets.iter().enumerate() {
        match net.out_dim() {
            Some(w) if w == cut_width => {}
            Some(w) => {
                return Err(Error::Agent {
                    agent: m,
                    detail: format!("segment output width {w}, aggregation expects {cut_width}"),
                })
            }
            None => {
                return Err(Error::Agent {
                    agent: m,
                    detail: "empty agent segment".into(),
                })
            }
        }
    }
    let n_a = agg.aggregation_width();
    if let Some(tail_in) = ps_tail.in_dim() {
        if tail_in != n_a {
            return Err(Error::Shape {
                context: "server tail input",
                expected: n_a,
                actual: tail_in,
            });
        }
    }
    let zero_bias = Tensor::zeros(vec![n_a])?;
    let soft_cut = agg
        .per_agent_weights
        .iter()
        .map(|w| DenseLayer::new(w.clone(), zero_bias.clone(), Activation::Identity))
        .collect::<Result<Vec<_>>>()?;
    let ps_head = PsHead {
        bias: agg.bias.data().to_vec(),
        activation: agg.activation,
    };
    Ok(SplitNetwork {
        agent_segments: agent_nets,
        soft_cut,
        ps_head,
        ps_tail,
    })
}

impl SplitNetwork {
    /// Builds a split from an already-trained sequential network
    /// `[segment..., aggregation, tail...]` where the aggregation layer sits at
    /// `aggregation_index`. Every agent gets the same segment and the block
    /// `W / agents`, so the server computes `a(W mean_m z_m + b)`.
    pub fn from_averaging(base: &Network, aggregation_index: usize, agents: usize) -> Result<Self> {
        let layers = base.layers();
        if aggregation_index == 0 || aggregation_index >= layers.len() {
            return Err(Error::config(format!(
                "aggregation index {aggregation_index} must leave a non-empty agent segment"
            )));
        }
        if agents == 0 {
            return Err(Error::NoParticipants);
        }
        let segment = Network::new(layers[..aggregation_index].to_vec())?;
        let agg_layer = &layers[aggregation_index];
        let scale = 1.0 / agents as f64;
        let block = Tensor::matrix(
            agg_layer.in_dim(),
            agg_layer.out_dim(),
            agg_layer
                .weights()
                .data()
                .iter()
                .map(|w| w * scale)
                .collect(),
        )?;
        let agg = AggregationSpec::shared(
            block,
            agg_layer.bias().clone(),
            agg_layer.activation(),
            agents,
        )?;
        let tail = Network::new(layers[aggregation_index + 1..].to_vec())?;
        make_split(vec![segment; agents], agg, tail)
    }

    /// Random split with independent per-agent segments and weight blocks.
    /// Segments are `input -> cut` with ReLU; the tail is `N_A -> classes`
    /// softmax.
    pub fn random<R: Rng + ?Sized>(
        agents: usize,
        input_width: usize,
        cut_width: usize,
        aggregation_width: usize,
        classes: usize,
        rng: &mut R,
    ) -> Result<Self> {
        let segments = (0..agents)
            .map(|_| Network::random(&[input_width, cut_width], &[Activation::Relu], rng))
            .collect::<Result<Vec<_>>>()?;
        let blocks = (0..agents)
            .map(|_| {
                DenseLayer::random(cut_width, aggregation_width, Activation::Identity, rng)
                    .map(|l| l.weights().clone())
            })
            .collect::<Result<Vec<_>>>()?;
        let bias = DenseLayer::random(1, aggregation_width, Activation::Identity, rng)?
            .bias()
            .clone();
        let agg = AggregationSpec::new(blocks, bias, Activation::Relu)?;
        let tail = Network::random(&[aggregation_width, classes], &[Activation::Softmax], rng)?;
        make_split(segments, agg, tail)
    }

    pub fn agents(&self) -> usize {
        self.agent_segments.len()
    }

    pub fn cut_width(&self) -> usize {
        self.soft_cut[0].in_dim()
    }

    pub fn aggregation_width(&self) -> usize {
        self.soft_cut[0].out_dim()
    }

    pub fn input_width(&self, agent: usize) -> usize {
        self.agent_segments[agent]
            .in_dim()
            .expect("segments are non-empty")
    }

    pub fn agent_segment(&self, agent: usize) -> &Network {
        &self.agent_segments[agent]
    }

    pub fn soft_cut(&self, agent: usize) -> &DenseLayer {
        &self.soft_cut[agent]
    }

    pub fn ps_head(&self) -> &PsHead {
        &self.ps_head
    }

    pub fn ps_tail(&self) -> &Network {
        &self.ps_tail
    }

    /// `O^m = soft_cut_m(segment_m(x_m))`; no bias and no nonlinearity after
    /// the soft cut.
    pub fn agent_forward(&self, agent: usize, x: &[f64]) -> Result<Vec<f64>> {
        let segment = self.agent_segments.get(agent).ok_or_else(|| Error::Agent {
            agent,
            detail: format!("no such agent (have {})", self.agents()),
        })?;
        let expected = self.input_width(agent);
        if x.len() != expected {
            return Err(Error::Agent {
                agent,
                detail: format!("input length {}, expected {expected}", x.len()),
            });
        }
        let cut = segment.forward_slice(x)?;
        self.soft_cut[agent].forward(&cut)
    }

    pub fn cut_outputs<X: AsRef<[f64]>>(&self, inputs: &[X]) -> Result<CutOutputs> {
        self.check_agent_count(inputs.len())?;
        let outputs = inputs
            .iter()
            .enumerate()
            .map(|(m, x)| self.agent_forward(m, x.as_ref()))
            .collect::<Result<Vec<_>>>()?;
        CutOutputs::new(outputs)
    }

    /// `a(I + b)` followed by the server tail.
    pub fn ps_forward(&self, aggregate: &[f64]) -> Result<Vec<f64>> {
        if aggregate.len() != self.aggregation_width() {
            return Err(Error::Shape {
                context: "aggregation input",
                expected: self.aggregation_width(),
                actual: aggregate.len(),
            });
        }
        self.ps_tail.forward_slice(&self.ps_head.apply(aggregate))
    }

    /// The original aggregation layer: stacked `(M * N_D, N_A)` weights with
    /// the real bias and activation.
    pub fn unsplit_aggregation_layer(&self) -> DenseLayer {
        let n_a = self.aggregation_width();
        let stacked: Vec<f64> = self
            .soft_cut
            .iter()
            .flat_map(|l| l.weights().data().iter().copied())
            .collect();
        let rows = stacked.len() / n_a;
        DenseLayer::new(
            Tensor::matrix(rows, n_a, stacked).expect("blocks share N_A"),
            Tensor::vector(self.ps_head.bias.clone()).expect("N_A > 0"),
            self.ps_head.activation,
        )
        .expect("bias length matches N_A")
    }

    /// Reference evaluation of the unsplit model on the concatenated cut-layer
    /// outputs.
    pub fn centralized_forward<X: AsRef<[f64]>>(&self, inputs: &[X]) -> Result<Vec<f64>> {
        self.check_agent_count(inputs.len())?;
        let mut concat = Vec::with_capacity(self.agents() * self.cut_width());
        for (m, x) in inputs.iter().enumerate() {
            let x = x.as_ref();
            if x.len() != self.input_width(m) {
                return Err(Error::Agent {
                    agent: m,
                    detail: format!("input length {}, expected {}", x.len(), self.input_width(m)),
                });
            }
            concat.extend(self.agent_segments[m].forward_slice(x)?);
        }
        let h = self.unsplit_aggregation_layer().forward(&concat)?;
        self.ps_tail.forward_slice(&h)
    }

    fn check_agent_count(&self, got: usize) -> Result<()> {
        if got != self.agents() {
            return Err(Error::Shape {
                context: "agent inputs",
                expected: self.agents(),
                actual: got,
            });
        }
        Ok(())
    }
}

pub mod format {
    //! Split model file.
    //!
    //! ```text
    //! "ASLS"          magic
    //! version         u32 LE
    //! agents          u32 LE
    //! sections        tag u8, length u32 LE, payload
    //!   1 agent segment   weight-format network (one per agent, in order)
    //!   2 soft cut        weight-format network with one layer (one per agent)
    //!   3 server head     activation u8, N_A u32, N_A f64 bias
    //!   4 server tail     weight-format network
    //! ```
    //! Sections appear in the order 1 x M, 2 x M, 3, 4.

    use std::path::Path;

    use super::{make_split, AggregationSpec, SplitNetwork};
    use crate::error::{Error, Result};
    use crate::nn::io::{read_network, Reader};
    use crate::nn::{encode_network, Activation, Network, Tensor};

    pub const SPLIT_MAGIC: &[u8; 4] = b"ASLS";
    pub const SPLIT_VERSION: u32 = 1;

    const TAG_SEGMENT: u8 = 1;
    const TAG_SOFT_CUT: u8 = 2;
    const TAG_HEAD: u8 = 3;
    const TAG_TAIL: u8 = 4;

    fn section(out: &mut Vec<u8>, tag: u8, payload: &[u8]) {
        out.push(tag);
        out.extend_from_slice(&(payload.len() as u32).to_le_bytes());
        out.extend_from_slice(payload);
    }

    pub fn encode_split(split: &SplitNetwork) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(SPLIT_MAGIC);
        out.extend_from_slice(&SPLIT_VERSION.to_le_bytes());
        out.extend_from_slice(&(split.agents() as u32).to_le_bytes());
        for seg in &split.agent_segments {
            section(&mut out, TAG_SEGMENT, &encode_network(seg));
        }
        for cut in &split.soft_cut {
            let net = Network::new(vec![cut.clone()]).expect("single layer");
            section(&mut out, TAG_SOFT_CUT, &encode_network(&net));
        }
        let mut head = vec![split.ps_head.activation.tag()];
        head.extend_from_slice(&(split.ps_head.bias.len() as u32).to_le_bytes());
        for b in &split.ps_head.bias {
            head.extend_from_slice(&b.to_le_bytes());
        }
        section(&mut out, TAG_HEAD, &head);
        section(&mut out, TAG_TAIL, &encode_network(&split.ps_tail));
        out
    }

    fn expect_section<'a>(r: &mut Reader<'a>, tag: u8) -> Result<Reader<'a>> {
        let at = r.pos;
        let found = r.u8("section tag")?;
        if found != tag {
            return Err(r.error_at(at, format!("expected section {tag}, found {found}")));
        }
        let len = r.u32("section length")? as usize;
        let base = r.pos;
        let payload = r.take(len, "section payload")?;
        Ok(Reader::with_base(payload, base))
    }

    fn sub_network(r: &mut Reader<'_>, tag: u8) -> Result<Network> {
        let mut sub = expect_section(r, tag)?;
        let net = read_network(&mut sub)?;
        sub.finish()?;
        Ok(net)
    }

    pub fn decode_split(bytes: &[u8]) -> Result<SplitNetwork> {
        let mut r = Reader::new(bytes);
        if r.take(4, "magic")? != SPLIT_MAGIC {
            return Err(r.error_at(0, "bad magic, expected \"ASLS\""));
        }
        let version = r.u32("version")?;
        if version != SPLIT_VERSION {
            return Err(Error::UnsupportedVersion {
                found: version,
                supported: SPLIT_VERSION,
            });
        }
        let agents = r.u32("agent count")? as usize;
        if agents == 0 {
            return Err(r.error_at(8, "zero agents"));
        }
        let segments = (0..agents)
            .map(|_| sub_network(&mut r, TAG_SEGMENT))
            .collect::<Result<Vec<_>>>()?;
        let mut blocks = Vec::with_capacity(agents);
        for _ in 0..agents {
            let at = r.pos;
            let net = sub_network(&mut r, TAG_SOFT_CUT)?;
            let [layer] = net.layers() else {
                return Err(r.error_at(at, "soft cut must hold exactly one layer"));
            };
            if layer.activation() != Activation::Identity
                || layer.bias().data().iter().any(|&b| b != 0.0)
            {
                return Err(r.error_at(at, "soft cut must have zero bias and identity activation"));
            }
            blocks.push(layer.weights().clone());
        }
        let mut head = expect_section(&mut r, TAG_HEAD)?;
        let tag = head.u8("head activation")?;
        let activation = Activation::from_tag(tag)
            .ok_or_else(|| head.error_at(head.pos - 1, format!("unknown activation tag {tag}")))?;
        let n_a = head.u32("head width")? as usize;
        let bias = head.f64s(n_a, "head bias")?;
        head.finish()?;
        let tail = sub_network(&mut r, TAG_TAIL)?;
        r.finish()?;

        let at = r.pos;
        let wrap = |e: Error| match e {
            Error::Parse { .. } => e,
            other => Error::Parse {
                offset: at,
                message: other.to_string(),
            },
        };
        let agg = AggregationSpec::new(blocks, Tensor::vector(bias).map_err(wrap)?, activation)
            .map_err(wrap)?;
        make_split(segments, agg, tail).map_err(wrap)
    }

    pub fn save_split(split: &SplitNetwork, path: impl AsRef<Path>) -> Result<()> {
        std::fs::write(path, encode_split(split))?;
        Ok(())
    }

    pub fn load_split(path: impl AsRef<Path>) -> Result<SplitNetwork> {
        decode_split(&std::fs::read(path)?)
    }
}
