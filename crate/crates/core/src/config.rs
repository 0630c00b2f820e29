//! Scenario configuration and its line-oriented `key=value` format.
//!
//! ```text
//! # comments run to end of line
//! n=200 protocol=ambr
//! V_max=20
//! area=1300x1300
//! ```
//!
//! Several pairs may share a line. Unknown keys, malformed values and
//! out-of-range values are rejected with the offending line and key.

use std::fmt;
use std::str::FromStr;

use crate::error::SimError;
use crate::mobility::{Arena, MobilityParams, Point};
use crate::radio::RadioConfig;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum ProtocolKind {
    Ambr,
    FloodReactive,
    FloodReactiveLr,
    Proactive,
}

impl ProtocolKind {
    pub const ALL: [ProtocolKind; 4] = [
        ProtocolKind::Ambr,
        ProtocolKind::FloodReactive,
        ProtocolKind::FloodReactiveLr,
        ProtocolKind::Proactive,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ProtocolKind::Ambr => "ambr",
            ProtocolKind::FloodReactive => "flood-reactive",
            ProtocolKind::FloodReactiveLr => "flood-reactive-lr",
            ProtocolKind::Proactive => "proactive",
        }
    }
}

impl fmt::Display for ProtocolKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ProtocolKind {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        ProtocolKind::ALL
            .into_iter()
            .find(|p| p.name() == s)
            .ok_or_else(|| {
                format!("expected one of ambr, flood-reactive, flood-reactive-lr, proactive; got `{s}`")
            })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Placement {
    Uniform,
    /// Redraw uniform placements until the unit-disk graph is connected.
    Connected,
    Fixed(Vec<Point>),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub area_width: f64,
    pub area_height: f64,
    pub n: usize,
    pub range: f64,
    pub bandwidth: f64,
    pub data_size: u32,
    pub v_min: f64,
    pub v_max: f64,
    pub pause: f64,
    pub pause_random: bool,
    pub sim_time: f64,
    /// Packets per second per flow.
    pub cbr_rate: f64,
    pub num_flows: usize,
    pub traffic_start: f64,
    /// Flows stop generating this long before the end so in-flight packets can land.
    pub traffic_drain: f64,
    pub protocol: ProtocolKind,

    pub monitor_threshold: usize,
    pub dl_max: u32,
    pub alive_period: f64,
    pub cache_ttl: f64,
    pub query_timeout: f64,
    pub hello_retry: f64,
    pub hello_jitter: f64,
    pub hello_attempts: u32,
    pub piggyback_window: f64,
    /// How long a member waits for a monitor-alive reply before it considers itself orphaned.
    pub alive_reply_timeout: f64,
    pub ack_timeout: Option<f64>,
    pub neighbor_timeout: f64,
    pub liveness_timeout: f64,
    pub queue_timeout: f64,
    pub election_slot: f64,
    pub demote_threshold: usize,
    /// Longest physical path (in hops) between two monitors that counts as adjacent.
    pub nm_max_hops: u32,

    pub rreq_ttl: u32,
    pub repair_ttl: u32,
    pub route_timeout: f64,
    pub discovery_timeout: f64,
    pub repair_timeout: f64,
    pub rreq_jitter: f64,
    /// Minimum spacing of route errors for one (broken link, source) pair.
    pub rerr_holdoff: f64,

    pub update_period: f64,
    pub entry_timeout: f64,
    pub triggered_updates: bool,
    pub triggered_min_interval: f64,

    pub loss_prob: f64,
    pub propagation_delay: f64,
    pub seed: u64,
    pub replications: usize,
    pub placement: Placement,
    pub sample_interval: f64,
    /// Nodes come up at independent uniform times in `[0, startup_jitter]`.
    pub startup_jitter: f64,
    pub trace: bool,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            area_width: 1300.0,
            area_height: 1300.0,
            n: 50,
            range: 250.0,
            bandwidth: 5000.0,
            data_size: 512,
            v_min: 1.0,
            v_max: 10.0,
            pause: 10.0,
            pause_random: false,
            sim_time: 200.0,
            cbr_rate: 10.0,
            num_flows: 10,
            traffic_start: 10.0,
            traffic_drain: 5.0,
            protocol: ProtocolKind::Ambr,

            monitor_threshold: 5,
            dl_max: 5,
            alive_period: 10.0,
            cache_ttl: 30.0,
            query_timeout: 2.0,
            hello_retry: 3.0,
            hello_jitter: 0.1,
            hello_attempts: 3,
            piggyback_window: 10.0,
            alive_reply_timeout: 1.0,
            ack_timeout: None,
            neighbor_timeout: 15.0,
            liveness_timeout: 30.0,
            queue_timeout: 5.0,
            election_slot: 0.15,
            demote_threshold: 1,
            nm_max_hops: 2,

            rreq_ttl: 32,
            repair_ttl: 2,
            route_timeout: 10.0,
            discovery_timeout: 3.0,
            repair_timeout: 1.0,
            rreq_jitter: 0.01,
            rerr_holdoff: 1.0,

            update_period: 15.0,
            entry_timeout: 45.0,
            triggered_updates: true,
            triggered_min_interval: 1.0,

            loss_prob: 0.0,
            propagation_delay: 0.0,
            seed: 1,
            replications: 5,
            placement: Placement::Uniform,
            sample_interval: 1.0,
            startup_jitter: 1.0,
            trace: false,
        }
    }
}

fn parse_num<T: FromStr>(v: &str) -> Result<T, String> {
    v.parse::<T>().map_err(|_| format!("cannot parse `{v}`"))
}

fn parse_bool(v: &str) -> Result<bool, String> {
    match v {
        "1" | "true" | "yes" | "on" => Ok(true),
        "0" | "false" | "no" | "off" => Ok(false),
        _ => Err(format!("expected a boolean, got `{v}`")),
    }
}

impl SimConfig {
    pub fn arena(&self) -> Arena {
        Arena {
            width: self.area_width,
            height: self.area_height,
        }
    }

    pub fn mobility_params(&self) -> MobilityParams {
        MobilityParams {
            arena: self.arena(),
            v_min: if self.v_max <= 0.0 { 0.0 } else { self.v_min },
            v_max: self.v_max,
            pause: self.pause,
            pause_random: self.pause_random,
        }
    }

    pub fn radio_config(&self) -> RadioConfig {
        RadioConfig {
            tx_range: self.range,
            bandwidth: self.bandwidth,
            loss_prob: self.loss_prob,
            propagation_delay: self.propagation_delay,
            ack_timeout: self.ack_timeout,
        }
    }

    /// No node ever moves.
    pub fn is_static(&self) -> bool {
        self.v_max <= 0.0 || self.pause >= self.sim_time
    }

    /// Parses a whole config text on top of the defaults.
    pub fn parse(text: &str) -> Result<SimConfig, SimError> {
        let mut cfg = SimConfig::default();
        cfg.apply_text(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Applies `key=value` pairs from `text` without validating.
    pub fn apply_text(&mut self, text: &str) -> Result<(), SimError> {
        for (i, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("");
            for tok in line.split_whitespace() {
                let (k, v) = tok.split_once('=').ok_or_else(|| SimError::Config {
                    line: i + 1,
                    key: tok.to_string(),
                    msg: "expected key=value".into(),
                })?;
                self.set(k, v).map_err(|msg| SimError::Config {
                    line: i + 1,
                    key: k.to_string(),
                    msg,
                })?;
            }
        }
        Ok(())
    }

    /// Sets one key. Key names are case-sensitive except for the symbol aliases.
    pub fn set(&mut self, key: &str, v: &str) -> Result<(), String> {
        match key {
            "area" => {
                let (w, h) = v
                    .split_once(['x', 'X'])
                    .ok_or_else(|| format!("expected WIDTHxHEIGHT, got `{v}`"))?;
                self.area_width = parse_num(w)?;
                self.area_height = parse_num(h)?;
            }
            "area_width" => self.area_width = parse_num(v)?,
            "area_height" => self.area_height = parse_num(v)?,
            "n" => self.n = parse_num(v)?,
            "r" | "range" => self.range = parse_num(v)?,
            "bandwidth" => self.bandwidth = parse_num(v)?,
            "data_size" => self.data_size = parse_num(v)?,
            "v_min" => self.v_min = parse_num(v)?,
            "V_max" | "v_max" => self.v_max = parse_num(v)?,
            "p" | "pause" => self.pause = parse_num(v)?,
            "pause_random" => self.pause_random = parse_bool(v)?,
            "sim_time" => self.sim_time = parse_num(v)?,
            "cbr_rate" | "rate" => self.cbr_rate = parse_num(v)?,
            "num_flows" | "flows" => self.num_flows = parse_num(v)?,
            "traffic_start" => self.traffic_start = parse_num(v)?,
            "traffic_drain" => self.traffic_drain = parse_num(v)?,
            "protocol" => self.protocol = v.parse()?,
            "T" | "monitor_threshold" => self.monitor_threshold = parse_num(v)?,
            "DL_max" | "dl_max" => self.dl_max = parse_num(v)?,
            "alive_period" => self.alive_period = parse_num(v)?,
            "cache_ttl" => self.cache_ttl = parse_num(v)?,
            "query_timeout" => self.query_timeout = parse_num(v)?,
            "hello_retry" => self.hello_retry = parse_num(v)?,
            "hello_jitter" => self.hello_jitter = parse_num(v)?,
            "hello_attempts" => self.hello_attempts = parse_num(v)?,
            "piggyback_window" => self.piggyback_window = parse_num(v)?,
            "alive_reply_timeout" => self.alive_reply_timeout = parse_num(v)?,
            "ack_timeout" => {
                self.ack_timeout = if v == "auto" {
                    None
                } else {
                    Some(parse_num(v)?)
                }
            }
            "neighbor_timeout" => self.neighbor_timeout = parse_num(v)?,
            "liveness_timeout" => self.liveness_timeout = parse_num(v)?,
            "queue_timeout" => self.queue_timeout = parse_num(v)?,
            "election_slot" => self.election_slot = parse_num(v)?,
            "demote_threshold" => self.demote_threshold = parse_num(v)?,
            "nm_max_hops" => self.nm_max_hops = parse_num(v)?,
            "rreq_ttl" => self.rreq_ttl = parse_num(v)?,
            "repair_ttl" => self.repair_ttl = parse_num(v)?,
            "route_timeout" => self.route_timeout = parse_num(v)?,
            "discovery_timeout" => self.discovery_timeout = parse_num(v)?,
            "repair_timeout" => self.repair_timeout = parse_num(v)?,
            "rreq_jitter" => self.rreq_jitter = parse_num(v)?,
            "rerr_holdoff" => self.rerr_holdoff = parse_num(v)?,
            "update_period" => self.update_period = parse_num(v)?,
            "entry_timeout" => self.entry_timeout = parse_num(v)?,
            "triggered_updates" => self.triggered_updates = parse_bool(v)?,
            "triggered_min_interval" => self.triggered_min_interval = parse_num(v)?,
            "loss_prob" => self.loss_prob = parse_num(v)?,
            "propagation_delay" => self.propagation_delay = parse_num(v)?,
            "seed" => self.seed = parse_num(v)?,
            "replications" => self.replications = parse_num(v)?,
            "placement" => {
                self.placement = match v {
                    "uniform" => Placement::Uniform,
                    "connected" => Placement::Connected,
                    _ => return Err(format!("expected uniform or connected, got `{v}`")),
                }
            }
            "sample_interval" => self.sample_interval = parse_num(v)?,
            "startup_jitter" => self.startup_jitter = parse_num(v)?,
            "trace" => self.trace = parse_bool(v)?,
            _ => return Err("unknown key".into()),
        }
        Ok(())
    }

    /// Range and consistency checks. Errors name the offending key (line 0).
    pub fn validate(&self) -> Result<(), SimError> {
        let err = |key: &str, msg: String| {
            Err(SimError::Config {
                line: 0,
                key: key.to_string(),
                msg,
            })
        };
        let positive = [
            ("area_width", self.area_width),
            ("area_height", self.area_height),
            ("r", self.range),
            ("bandwidth", self.bandwidth),
            ("sim_time", self.sim_time),
            ("cbr_rate", self.cbr_rate),
            ("alive_period", self.alive_period),
            ("cache_ttl", self.cache_ttl),
            ("query_timeout", self.query_timeout),
            ("hello_retry", self.hello_retry),
            ("piggyback_window", self.piggyback_window),
            ("alive_reply_timeout", self.alive_reply_timeout),
            ("neighbor_timeout", self.neighbor_timeout),
            ("liveness_timeout", self.liveness_timeout),
            ("queue_timeout", self.queue_timeout),
            ("election_slot", self.election_slot),
            ("route_timeout", self.route_timeout),
            ("discovery_timeout", self.discovery_timeout),
            ("repair_timeout", self.repair_timeout),
            ("update_period", self.update_period),
            ("entry_timeout", self.entry_timeout),
            ("sample_interval", self.sample_interval),
        ];
        for (k, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return err(k, format!("must be positive, got {v}"));
            }
        }
        let nonneg = [
            ("v_min", self.v_min),
            ("V_max", self.v_max),
            ("p", self.pause),
            ("traffic_start", self.traffic_start),
            ("traffic_drain", self.traffic_drain),
            ("hello_jitter", self.hello_jitter),
            ("rreq_jitter", self.rreq_jitter),
            ("rerr_holdoff", self.rerr_holdoff),
            ("triggered_min_interval", self.triggered_min_interval),
            ("propagation_delay", self.propagation_delay),
            ("startup_jitter", self.startup_jitter),
        ];
        for (k, v) in nonneg {
            if !(v >= 0.0 && v.is_finite()) {
                return err(k, format!("must be nonnegative, got {v}"));
            }
        }
        if self.n == 0 {
            return err("n", "must be positive".into());
        }
        if self.data_size == 0 {
            return err("data_size", "must be positive".into());
        }
        if self.v_max > 0.0 && self.v_min > self.v_max {
            return err(
                "v_min",
                format!("v_min {} exceeds V_max {}", self.v_min, self.v_max),
            );
        }
        if self.v_max > 0.0 && self.v_min <= 0.0 && self.pause <= 0.0 {
            return err(
                "v_min",
                "zero minimum speed with zero pause can stall a node forever".into(),
            );
        }
        if !(0.0..=1.0).contains(&self.loss_prob) {
            return err("loss_prob", format!("must lie in [0, 1], got {}", self.loss_prob));
        }
        if let Some(a) = self.ack_timeout {
            if a.is_nan() || a <= 0.0 {
                return err("ack_timeout", format!("must be positive, got {a}"));
            }
        }
        if self.monitor_threshold == 0 {
            return err("T", "must be at least 1".into());
        }
        if self.hello_attempts == 0 {
            return err("hello_attempts", "must be at least 1".into());
        }
        if self.rreq_ttl == 0 {
            return err("rreq_ttl", "must be at least 1".into());
        }
        if self.repair_ttl == 0 {
            return err("repair_ttl", "must be at least 1".into());
        }
        if self.nm_max_hops == 0 {
            return err("nm_max_hops", "must be at least 1".into());
        }
        if self.replications == 0 {
            return err("replications", "must be at least 1".into());
        }
        if self.num_flows > 0 && self.n < 2 {
            return err("num_flows", "traffic needs at least two nodes".into());
        }
        if let Placement::Fixed(pts) = &self.placement {
            if pts.len() != self.n {
                return err(
                    "placement",
                    format!("{} fixed positions for {} nodes", pts.len(), self.n),
                );
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_text_gives_table_defaults() {
        let c = SimConfig::parse("").unwrap();
        assert_eq!((c.area_width, c.area_height), (1300.0, 1300.0));
        assert_eq!(c.range, 250.0);
        assert_eq!(c.bandwidth, 5000.0);
        assert_eq!(c.data_size, 512);
    }

    #[test]
    fn overrides_on_one_line() {
        let c = SimConfig::parse("n=200 protocol=ambr\n# comment\nV_max=20 # trailing").unwrap();
        assert_eq!(c.n, 200);
        assert_eq!(c.protocol, ProtocolKind::Ambr);
        assert_eq!(c.v_max, 20.0);
    }

    #[test]
    fn negative_speed_rejected_with_key() {
        let e = SimConfig::parse("V_max=-1").unwrap_err();
        let msg = e.to_string();
        assert!(msg.contains("V_max"), "{msg}");
    }

    #[test]
    fn unknown_key_reports_line() {
        match SimConfig::parse("n=3\nbogus=1") {
            Err(SimError::Config { line, key, .. }) => {
                assert_eq!(line, 2);
                assert_eq!(key, "bogus");
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn v_min_above_v_max_rejected() {
        assert!(SimConfig::parse("v_min=5 V_max=3").is_err());
        assert!(SimConfig::parse("V_max=0").is_ok());
    }

    #[test]
    fn bad_values_rejected() {
        assert!(SimConfig::parse("n=abc").is_err());
        assert!(SimConfig::parse("protocol=olsr").is_err());
        assert!(SimConfig::parse("loss_prob=1.5").is_err());
        assert!(SimConfig::parse("novalue").is_err());
        let c = SimConfig::parse("area=600x400 protocol=flood-reactive-lr").unwrap();
        assert_eq!((c.area_width, c.area_height), (600.0, 400.0));
        assert_eq!(c.protocol, ProtocolKind::FloodReactiveLr);
    }
}
