//! Exact operation counters shared by the one-step and dense paths.

/// Accumulates counts over one or more forward passes. All counters are
/// exact; nothing is sampled.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Probe {
    /// Radius searches issued, one per query point.
    pub ball_queries: u64,
    /// Point-to-point distances evaluated by neighbor searches and FPS.
    pub distance_evals: u64,
    /// Group members passed through a member MLP.
    pub member_embeddings: u64,
    /// When set, stages record their anchor groups before and after the
    /// virtual-frame shift.
    pub capture_groups: bool,
    pub captures: Vec<GroupCapture>,
}

/// Relative group coordinates `H` and shifted coordinates `H'` of one stage,
/// flattened `[frame][anchor][member][xyz]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GroupCapture {
    pub stage: usize,
    pub relative: Vec<f64>,
    pub shifted: Vec<f64>,
}

impl Probe {
    pub fn capturing() -> Self {
        Self {
            capture_groups: true,
            ..Self::default()
        }
    }

    pub fn merge(&mut self, other: &Probe) {
        self.ball_queries += other.ball_queries;
        self.distance_evals += other.distance_evals;
        self.member_embeddings += other.member_embeddings;
        self.captures.extend(other.captures.iter().cloned());
    }
}
