//! Three-stage switch fabrics built from concentrator/expander blocks.
//!
//! Wiring: output link `j` of input block `i` reaches input `i` of middle
//! block `j`; output link `k` of middle block `j` reaches input `j` of
//! output block `k`. Output-block inputs beyond the number of middle blocks
//! are unconnected spares. Links carry one connection each; a fabric input
//! may feed several connections, each over its own middle link.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use thiserror::Error;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct StageSpec {
    pub blocks: usize,
    pub inputs_per_block: usize,
    pub outputs_per_block: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BlockClass {
    Concentrator,
    Square,
    Expander,
}

impl StageSpec {
    pub fn new(blocks: usize, inputs_per_block: usize, outputs_per_block: usize) -> Self {
        StageSpec {
            blocks,
            inputs_per_block,
            outputs_per_block,
        }
    }

    /// Expansion ratio `m / n`.
    pub fn ratio(&self) -> f64 {
        self.outputs_per_block as f64 / self.inputs_per_block as f64
    }

    pub fn class(&self) -> BlockClass {
        match self.outputs_per_block.cmp(&self.inputs_per_block) {
            std::cmp::Ordering::Less => BlockClass::Concentrator,
            std::cmp::Ordering::Equal => BlockClass::Square,
            std::cmp::Ordering::Greater => BlockClass::Expander,
        }
    }

    pub fn switches(&self) -> usize {
        self.blocks * self.inputs_per_block * self.outputs_per_block
    }

    pub fn total_inputs(&self) -> usize {
        self.blocks * self.inputs_per_block
    }

    pub fn total_outputs(&self) -> usize {
        self.blocks * self.outputs_per_block
    }

    fn is_valid(&self) -> bool {
        self.blocks > 0 && self.inputs_per_block > 0 && self.outputs_per_block > 0
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum FabricError {
    #[error("stage dimensions must be positive")]
    EmptyStage,
    #[error("input blocks have {links} middle links but there are {middle} middle blocks")]
    InputWiring { links: usize, middle: usize },
    #[error("middle blocks have {inputs} inputs but there are {blocks} input blocks")]
    MiddleInputWiring { inputs: usize, blocks: usize },
    #[error("middle blocks have {links} output links but there are {blocks} output blocks")]
    MiddleOutputWiring { links: usize, blocks: usize },
    #[error("output blocks have {inputs} inputs, fewer than the {middle} middle blocks")]
    OutputWiring { inputs: usize, middle: usize },
    #[error("cannot parse fabric spec `{0}`")]
    Syntax(String),
    #[error("load {load} exceeds the {outputs} fabric outputs")]
    Load { load: usize, outputs: usize },
    #[error("blocking experiments need a three-stage fabric")]
    NotMultiStage,
}

/// A three-stage fabric.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FabricSpec {
    pub input: StageSpec,
    pub middle: StageSpec,
    pub output: StageSpec,
}

impl FabricSpec {
    pub fn new(input: StageSpec, middle: StageSpec, output: StageSpec) -> Result<Self, FabricError> {
        if ![input, middle, output].iter().all(StageSpec::is_valid) {
            return Err(FabricError::EmptyStage);
        }
        if input.outputs_per_block != middle.blocks {
            return Err(FabricError::InputWiring {
                links: input.outputs_per_block,
                middle: middle.blocks,
            });
        }
        if middle.inputs_per_block != input.blocks {
            return Err(FabricError::MiddleInputWiring {
                inputs: middle.inputs_per_block,
                blocks: input.blocks,
            });
        }
        if middle.outputs_per_block != output.blocks {
            return Err(FabricError::MiddleOutputWiring {
                links: middle.outputs_per_block,
                blocks: output.blocks,
            });
        }
        if output.inputs_per_block < middle.blocks {
            return Err(FabricError::OutputWiring {
                inputs: output.inputs_per_block,
                middle: middle.blocks,
            });
        }
        Ok(FabricSpec {
            input,
            middle,
            output,
        })
    }

    /// Twenty 16x20 input blocks, twenty 20x32 middle blocks, thirty-two
    /// 22x16 output blocks: 320 inputs, 512 outputs.
    pub fn simstar() -> Self {
        FabricSpec::new(
            StageSpec::new(20, 16, 20),
            StageSpec::new(20, 20, 32),
            StageSpec::new(32, 22, 16),
        )
        .expect("valid geometry")
    }

    pub fn switch_count(&self) -> usize {
        self.input.switches() + self.middle.switches() + self.output.switches()
    }

    pub fn total_inputs(&self) -> usize {
        self.input.total_inputs()
    }

    pub fn total_outputs(&self) -> usize {
        self.output.total_outputs()
    }

    /// Output-block inputs with no middle block behind them.
    pub fn spare_output_inputs(&self) -> usize {
        self.output.inputs_per_block - self.middle.blocks
    }
}

/// Either a full single-stage crossbar or a three-stage fabric.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Fabric {
    Crossbar { inputs: usize, outputs: usize },
    ThreeStage(FabricSpec),
}

impl Fabric {
    pub fn switch_count(&self) -> usize {
        match self {
            Fabric::Crossbar { inputs, outputs } => inputs * outputs,
            Fabric::ThreeStage(spec) => spec.switch_count(),
        }
    }
}

fn parse_dims(s: &str, n: usize) -> Option<Vec<usize>> {
    let dims: Vec<usize> = s.split('x').map(|d| d.trim().parse().ok()).collect::<Option<_>>()?;
    (dims.len() == n && dims.iter().all(|&d| d > 0)).then_some(dims)
}

/// `simstar`, `crossbar:<n>x<m>`, or
/// `custom:<blocks>x<n>x<m>,<blocks>x<n>x<m>,<blocks>x<n>x<m>`.
impl FromStr for Fabric {
    type Err = FabricError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let syntax = || FabricError::Syntax(s.to_string());
        if s == "simstar" {
            return Ok(Fabric::ThreeStage(FabricSpec::simstar()));
        }
        if let Some(rest) = s.strip_prefix("crossbar:") {
            let d = parse_dims(rest, 2).ok_or_else(syntax)?;
            return Ok(Fabric::Crossbar {
                inputs: d[0],
                outputs: d[1],
            });
        }
        if let Some(rest) = s.strip_prefix("custom:") {
            let stages: Vec<StageSpec> = rest
                .split(',')
                .map(|st| parse_dims(st, 3).map(|d| StageSpec::new(d[0], d[1], d[2])))
                .collect::<Option<_>>()
                .ok_or_else(syntax)?;
            if stages.len() != 3 {
                return Err(syntax());
            }
            return Ok(Fabric::ThreeStage(FabricSpec::new(stages[0], stages[1], stages[2])?));
        }
        Err(syntax())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct RoutedPath {
    pub input: usize,
    pub output: usize,
    pub middle_block: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum RouteError {
    /// Every middle block has a busy link on the first hop, the second hop,
    /// or both.
    #[error("blocked: no middle block has free links on both hops")]
    Blocked {
        first_hop_busy: Vec<usize>,
        second_hop_busy: Vec<usize>,
    },
    #[error("output {0} is already connected")]
    OutputBusy(usize),
    #[error("{what} {index} is out of range")]
    IndexOutOfRange { what: &'static str, index: usize },
    #[error("output {0} has no route")]
    NoSuchRoute(usize),
}

/// Live connection state of a three-stage fabric.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct FabricState {
    spec: FabricSpec,
    /// `[input block][middle block]`: output index of the route using it.
    first_hop: Vec<Vec<Option<usize>>>,
    /// `[middle block][output block]`.
    second_hop: Vec<Vec<Option<usize>>>,
    /// Fabric output → fabric input driving it.
    output_source: Vec<Option<usize>>,
    routes: Vec<RoutedPath>,
}

impl FabricState {
    pub fn new(spec: FabricSpec) -> Self {
        FabricState {
            first_hop: vec![vec![None; spec.middle.blocks]; spec.input.blocks],
            second_hop: vec![vec![None; spec.output.blocks]; spec.middle.blocks],
            output_source: vec![None; spec.total_outputs()],
            routes: Vec::new(),
            spec,
        }
    }

    pub fn spec(&self) -> &FabricSpec {
        &self.spec
    }

    pub fn routes(&self) -> &[RoutedPath] {
        &self.routes
    }

    fn input_block(&self, input: usize) -> usize {
        input / self.spec.input.inputs_per_block
    }

    fn output_block(&self, output: usize) -> usize {
        output / self.spec.output.outputs_per_block
    }

    /// Connects `input` to `output` through the lowest-numbered middle
    /// block with both links free. The state is unchanged on error.
    pub fn route_request(&mut self, input: usize, output: usize) -> Result<RoutedPath, RouteError> {
        if input >= self.spec.total_inputs() {
            return Err(RouteError::IndexOutOfRange {
                what: "input",
                index: input,
            });
        }
        if output >= self.spec.total_outputs() {
            return Err(RouteError::IndexOutOfRange {
                what: "output",
                index: output,
            });
        }
        if self.output_source[output].is_some() {
            return Err(RouteError::OutputBusy(output));
        }
        let (ib, ob) = (self.input_block(input), self.output_block(output));
        let free = (0..self.spec.middle.blocks)
            .find(|&m| self.first_hop[ib][m].is_none() && self.second_hop[m][ob].is_none());
        let Some(m) = free else {
            return Err(RouteError::Blocked {
                first_hop_busy: (0..self.spec.middle.blocks)
                    .filter(|&m| self.first_hop[ib][m].is_some())
                    .collect(),
                second_hop_busy: (0..self.spec.middle.blocks)
                    .filter(|&m| self.second_hop[m][ob].is_some())
                    .collect(),
            });
        };
        self.first_hop[ib][m] = Some(output);
        self.second_hop[m][ob] = Some(output);
        self.output_source[output] = Some(input);
        let path = RoutedPath {
            input,
            output,
            middle_block: m,
        };
        self.routes.push(path);
        Ok(path)
    }

    /// Routes `input` to every listed output, or to none of them.
    pub fn route_fanout(&mut self, input: usize, outputs: &[usize]) -> Result<Vec<RoutedPath>, RouteError> {
        let snapshot = self.clone();
        let mut paths = Vec::with_capacity(outputs.len());
        for &output in outputs {
            match self.route_request(input, output) {
                Ok(p) => paths.push(p),
                Err(e) => {
                    *self = snapshot;
                    return Err(e);
                }
            }
        }
        Ok(paths)
    }

    /// Tears down the route ending at `output`.
    pub fn remove_route(&mut self, output: usize) -> Result<RoutedPath, RouteError> {
        let idx = self
            .routes
            .iter()
            .position(|r| r.output == output)
            .ok_or(RouteError::NoSuchRoute(output))?;
        let path = self.routes.remove(idx);
        let (ib, ob) = (self.input_block(path.input), self.output_block(path.output));
        self.first_hop[ib][path.middle_block] = None;
        self.second_hop[path.middle_block][ob] = None;
        self.output_source[output] = None;
        Ok(path)
    }

    /// Checks link and output occupancy against the route list.
    pub fn check_invariants(&self) -> Result<(), String> {
        let mut first = vec![vec![None; self.spec.middle.blocks]; self.spec.input.blocks];
        let mut second = vec![vec![None; self.spec.output.blocks]; self.spec.middle.blocks];
        let mut sources = vec![None; self.spec.total_outputs()];
        for r in &self.routes {
            let (ib, ob, m) = (self.input_block(r.input), self.output_block(r.output), r.middle_block);
            for (slot, name) in [(&mut first[ib][m], "first hop"), (&mut second[m][ob], "second hop")] {
                if slot.replace(r.output).is_some() {
                    return Err(format!("{name} link through middle block {m} used twice"));
                }
            }
            if sources[r.output].replace(r.input).is_some() {
                return Err(format!("output {} routed twice", r.output));
            }
        }
        if first != self.first_hop || second != self.second_hop || sources != self.output_source {
            return Err("occupancy tables disagree with routes".to_string());
        }
        let busy = self.output_source.iter().filter(|s| s.is_some()).count();
        if busy != self.routes.len() {
            return Err(format!("{busy} busy outputs for {} routes", self.routes.len()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BlockingReport {
    /// Fraction of trials with at least one blocked request.
    pub blocked_fraction: f64,
    /// Mean number of requests routed per trial.
    pub mean_routed: f64,
}

impl fmt::Display for BlockingReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "blocked_fraction: {}", self.blocked_fraction)?;
        writeln!(f, "mean_routed: {}", self.mean_routed)
    }
}

/// Runs one trial: `load` requests from uniformly random inputs to
/// distinct, uniformly random outputs on an empty fabric. Returns the
/// number routed and whether any request blocked.
fn blocking_trial(spec: &FabricSpec, load: usize, seed: u64, trial: u64) -> (usize, bool) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(trial);
    let mut outputs: Vec<usize> = (0..spec.total_outputs()).collect();
    outputs.shuffle(&mut rng);
    let mut state = FabricState::new(*spec);
    let mut routed = 0;
    let mut blocked = false;
    for &output in &outputs[..load] {
        let input = rng.gen_range(0..spec.total_inputs());
        match state.route_request(input, output) {
            Ok(_) => routed += 1,
            Err(RouteError::Blocked { .. }) => blocked = true,
            Err(e) => unreachable!("fresh output on a valid fabric: {e}"),
        }
    }
    (routed, blocked)
}

/// Monte Carlo blocking estimate. Trials run in parallel, each with its own
/// random stream, so the result depends only on the arguments.
pub fn blocking_experiment(
    spec: &FabricSpec,
    load: usize,
    trials: usize,
    seed: u64,
) -> Result<BlockingReport, FabricError> {
    if load > spec.total_outputs() {
        return Err(FabricError::Load {
            load,
            outputs: spec.total_outputs(),
        });
    }
    if trials == 0 {
        return Ok(BlockingReport {
            blocked_fraction: 0.0,
            mean_routed: 0.0,
        });
    }
    let results: Vec<(usize, bool)> = (0..trials as u64)
        .into_par_iter()
        .map(|t| blocking_trial(spec, load, seed, t))
        .collect();
    let blocked = results.iter().filter(|r| r.1).count();
    let routed: usize = results.iter().map(|r| r.0).sum();
    Ok(BlockingReport {
        blocked_fraction: blocked as f64 / trials as f64,
        mean_routed: routed as f64 / trials as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn simstar_switches() {
        let s = FabricSpec::simstar();
        assert_eq!(s.switch_count(), 30464);
        assert_eq!(s.total_inputs(), 320);
        assert_eq!(s.total_outputs(), 512);
        assert_eq!(s.spare_output_inputs(), 2);
        assert_eq!(s.input.class(), BlockClass::Expander);
        assert_eq!(s.output.class(), BlockClass::Concentrator);
        assert_eq!(s.input.ratio(), 1.25);
    }

    #[test]
    fn crossbar_switches() {
        let f: Fabric = "crossbar:320x512".parse().unwrap();
        assert_eq!(f.switch_count(), 163840);
        let f: Fabric = "crossbar:1x1".parse().unwrap();
        assert_eq!(f.switch_count(), 1);
        assert_eq!(StageSpec::new(1, 1, 1).switches(), 1);
    }

    #[test]
    fn parse_specs() {
        let f: Fabric = "custom:20x16x20,20x20x32,32x22x16".parse().unwrap();
        assert_eq!(f, Fabric::ThreeStage(FabricSpec::simstar()));
        assert!("custom:2x2x2".parse::<Fabric>().is_err());
        assert!("crossbar:0x4".parse::<Fabric>().is_err());
        assert!("benes".parse::<Fabric>().is_err());
        assert!(matches!(
            "custom:2x2x3,2x2x2,2x2x2".parse::<Fabric>(),
            Err(FabricError::InputWiring { .. })
        ));
    }

    #[test]
    fn doubling_blocks_doubles_switches() {
        let s = FabricSpec::simstar();
        let double = |st: StageSpec| StageSpec::new(2 * st.blocks, st.inputs_per_block, st.outputs_per_block);
        let sum = double(s.input).switches() + double(s.middle).switches() + double(s.output).switches();
        assert_eq!(sum, 2 * s.switch_count());
    }

    #[test]
    fn first_request() {
        let mut st = FabricState::new(FabricSpec::simstar());
        let p = st.route_request(0, 0).unwrap();
        assert_eq!(p.middle_block, 0);
        assert_eq!(st.route_request(1, 0), Err(RouteError::OutputBusy(0)));
        assert!(matches!(st.route_request(320, 1), Err(RouteError::IndexOutOfRange { .. })));
        assert!(matches!(st.route_request(0, 512), Err(RouteError::IndexOutOfRange { .. })));
    }

    #[test]
    fn identity_routes() {
        let mut st = FabricState::new(FabricSpec::simstar());
        for k in 0..320 {
            st.route_request(k, k).unwrap();
            st.check_invariants().unwrap();
        }
        assert_eq!(st.routes().len(), 320);
    }

    #[test]
    fn input_block_saturation() {
        let mut st = FabricState::new(FabricSpec::simstar());
        // 20 routes from input block 0 to 20 distinct output blocks
        for k in 0..20 {
            st.route_request(k % 16, k * 16).unwrap();
        }
        match st.route_request(0, 400) {
            Err(RouteError::Blocked { first_hop_busy, .. }) => {
                assert_eq!(first_hop_busy, (0..20).collect::<Vec<_>>())
            }
            other => panic!("{other:?}"),
        }
        st.check_invariants().unwrap();
    }

    #[test]
    fn fanout_limits() {
        let spec = FabricSpec::simstar();
        let mut st = FabricState::new(spec);
        let outs: Vec<usize> = (0..25).collect();
        assert!(matches!(st.route_fanout(0, &outs), Err(RouteError::Blocked { .. })));
        assert_eq!(st, FabricState::new(spec));

        let outs: Vec<usize> = (0..20).map(|b| b * 16).collect();
        assert_eq!(st.route_fanout(0, &outs).unwrap().len(), 20);

        let mut a = FabricState::new(spec);
        let mut b = FabricState::new(spec);
        assert_eq!(a.route_fanout(3, &[7]).unwrap(), vec![b.route_request(3, 7).unwrap()]);
        assert_eq!(a, b);
    }

    #[test]
    fn teardown_restores_state() {
        let mut st = FabricState::new(FabricSpec::simstar());
        st.route_request(5, 100).unwrap();
        let before = st.clone();
        st.route_request(17, 3).unwrap();
        st.remove_route(3).unwrap();
        assert_eq!(st, before);
        assert_eq!(st.remove_route(3), Err(RouteError::NoSuchRoute(3)));
    }

    #[test]
    fn experiment_edges() {
        let s = FabricSpec::simstar();
        let r = blocking_experiment(&s, 0, 10, 1).unwrap();
        assert_eq!(r.blocked_fraction, 0.0);
        let r = blocking_experiment(&s, 1, 200, 7).unwrap();
        assert_eq!(r.blocked_fraction, 0.0);
        assert_eq!(r.mean_routed, 1.0);
        assert!(blocking_experiment(&s, 513, 1, 0).is_err());
        assert_eq!(
            blocking_experiment(&s, 300, 50, 9).unwrap(),
            blocking_experiment(&s, 300, 50, 9).unwrap()
        );
    }
}
