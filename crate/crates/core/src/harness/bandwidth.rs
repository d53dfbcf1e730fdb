//! Byte accounting for one frame of simulated message exchange, compared
//! against sharing raw images.

use crate::graph::CommGraph;
use crate::model::ModelConfig;

/// Published reference point: one encoded message per level costs 2.5 MB
/// per frame versus 6 MB per frame for a raw image, a ratio of about 0.417.
pub const REFERENCE_MESSAGE_MBPF: f64 = 2.5;
pub const REFERENCE_RAW_MBPF: f64 = 6.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LinkBandwidth {
    pub source: usize,
    pub dest: usize,
    pub bytes_per_level: u64,
    pub bytes_total: u64,
}

/// Per-link and per-frame byte counts for one frame of message passing.
#[derive(Debug, Clone, PartialEq)]
pub struct BandwidthReport {
    pub links: Vec<LinkBandwidth>,
    pub levels: usize,
    /// `C · h · w · payload_width` for one message.
    pub message_bytes_per_link_per_level: u64,
    pub total_message_bytes_per_frame: u64,
    /// `3 · H · W · payload_width` for one raw image.
    pub raw_bytes_per_image: u64,
    /// Raw sharing ships one image per directed link.
    pub total_raw_bytes_per_frame: u64,
    /// message / raw, per link.
    pub message_to_raw_ratio: f64,
}

impl BandwidthReport {
    pub fn reference_ratio() -> f64 {
        REFERENCE_MESSAGE_MBPF / REFERENCE_RAW_MBPF
    }

    pub fn render(&self) -> String {
        let mut s = String::new();
        s.push_str(&format!(
            "message bytes per link per level: {}\n",
            self.message_bytes_per_link_per_level
        ));
        s.push_str(&format!("levels: {}\n", self.levels));
        s.push_str(&format!("directed links: {}\n", self.links.len()));
        s.push_str(&format!(
            "total message bytes per frame: {}\n",
            self.total_message_bytes_per_frame
        ));
        s.push_str(&format!("raw bytes per image: {}\n", self.raw_bytes_per_image));
        s.push_str(&format!(
            "total raw-sharing bytes per frame: {}\n",
            self.total_raw_bytes_per_frame
        ));
        s.push_str(&format!(
            "message/raw ratio: {:.6}\n",
            self.message_to_raw_ratio
        ));
        s.push_str(&format!(
            "reference point: {REFERENCE_MESSAGE_MBPF} MBpf per message-level vs {REFERENCE_RAW_MBPF} MBpf raw, ratio {:.6}\n",
            Self::reference_ratio()
        ));
        for link in &self.links {
            s.push_str(&format!(
                "link {} -> {}: {} bytes/level, {} bytes/frame\n",
                link.source, link.dest, link.bytes_per_level, link.bytes_total
            ));
        }
        s
    }
}

/// Account for one frame of exchange: every directed link carries one
/// `C×h×w` message per level.
pub fn simulate_exchange(
    graph: &CommGraph,
    cfg: &ModelConfig,
    payload_width: usize,
) -> BandwidthReport {
    let (fh, fw) = cfg.feature_dims();
    let message = (cfg.channels * fh * fw * payload_width) as u64;
    let raw = (3 * cfg.height * cfg.width * payload_width) as u64;
    let mut links = Vec::with_capacity(graph.directed_links());
    for &(a, b) in graph.edges() {
        for (src, dst) in [(a, b), (b, a)] {
            links.push(LinkBandwidth {
                source: src,
                dest: dst,
                bytes_per_level: message,
                bytes_total: message * cfg.levels as u64,
            });
        }
    }
    links.sort_by_key(|l| (l.source, l.dest));
    let total_message = message * cfg.levels as u64 * links.len() as u64;
    let total_raw = raw * links.len() as u64;
    BandwidthReport {
        levels: cfg.levels,
        message_bytes_per_link_per_level: message,
        total_message_bytes_per_frame: total_message,
        raw_bytes_per_image: raw,
        total_raw_bytes_per_frame: total_raw,
        message_to_raw_ratio: message as f64 / raw as f64,
        links,
    }
}
