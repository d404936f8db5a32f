use super::config::ModelConfig;
use crate::error::Result;

fn chain_macs(in_dim: usize, widths: &[usize]) -> (u64, u64, usize) {
    let mut d = in_dim;
    let mut macs = 0u64;
    let mut params = 0u64;
    for &w in widths {
        macs += (d * w) as u64;
        params += (d * w + w) as u64;
        d = w;
    }
    (macs, params, d)
}

#[derive(Debug, Clone, PartialEq)]
pub struct StageCost {
    pub anchors: usize,
    pub params: u64,
    pub macs: u64,
    pub ball_queries: u64,
    pub distance_evals: u64,
}

/// Closed-form cost of one forward pass of the one-step model.
#[derive(Debug, Clone, PartialEq)]
pub struct Accounting {
    pub stages: Vec<StageCost>,
    pub head_params: u64,
    pub head_macs: u64,
    pub params: u64,
    /// Multiply-accumulate count of the affine layers.
    pub macs: u64,
    /// Same work counted as two floating point operations per multiply-add.
    pub flops: u64,
    pub ball_queries: u64,
    pub distance_evals: u64,
}

/// Parameters and multiply-adds for `n` points and `t` frames. Per stage the
/// multiply-adds are `M_out * T * (K * cost(mlp1) + cost(mlp2))`; neighbor
/// search work is reported separately.
pub fn count_params_and_flops(cfg: &ModelConfig, n: usize, t: usize) -> Result<Accounting> {
    cfg.validate()?;
    let mut stages = Vec::with_capacity(cfg.stages.len());
    let mut m_in = n;
    for (s, cin) in cfg.stages.iter().zip(cfg.stage_in_channels()) {
        let m_out = s.anchors_for(m_in);
        let (member_macs, mut params, c1) = chain_macs(cin, s.member_mlp());
        let (pooled_macs, pooled_params) = match s.pooled_mlp() {
            Some(w) => {
                let (m, p, _) = chain_macs(c1, w);
                (m, p)
            }
            None => (0, 0),
        };
        params += pooled_params;
        let slots = (m_out * t) as u64;
        let sets = if cfg.imitator_enabled { 2 } else { 1 };
        stages.push(StageCost {
            anchors: m_out,
            params,
            macs: slots * (s.nsamples as u64 * member_macs + pooled_macs),
            ball_queries: sets * slots,
            distance_evals: (sets + 1) * slots * m_in as u64,
        });
        m_in = m_out;
    }
    let mut widths = cfg.head_hidden.clone();
    widths.push(cfg.num_classes);
    let (head_macs, head_params, _) = chain_macs(cfg.feature_channels(), &widths);
    let macs = stages.iter().map(|s| s.macs).sum::<u64>() + head_macs;
    Ok(Accounting {
        head_params,
        head_macs,
        params: stages.iter().map(|s| s.params).sum::<u64>() + head_params,
        macs,
        flops: 2 * macs,
        ball_queries: stages.iter().map(|s| s.ball_queries).sum(),
        distance_evals: stages.iter().map(|s| s.distance_evals).sum(),
        stages,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::StageConfig;

    #[test]
    fn single_linear_counts() {
        let (macs, params, out) = chain_macs(3, &[64]);
        assert_eq!((macs, params, out), (192, 256, 64));
    }

    #[test]
    fn stage_macs_linear_in_frames() {
        let cfg = ModelConfig::msr(20);
        let a = count_params_and_flops(&cfg, 2048, 8).unwrap();
        let b = count_params_and_flops(&cfg, 2048, 16).unwrap();
        for (x, y) in a.stages.iter().zip(&b.stages) {
            assert_eq!(2 * x.macs, y.macs);
        }
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn one_stage_hand_count() {
        let mut cfg = ModelConfig::micro(2);
        cfg.stages = vec![StageConfig::new(vec![vec![4]], 2, 2, 1.0)];
        cfg.head_hidden = vec![];
        // 8 points -> 4 anchors, 3 frames: 12 slots * 2 members * 12 macs
        let a = count_params_and_flops(&cfg, 8, 3).unwrap();
        assert_eq!(a.stages[0].macs, 12 * 2 * 12);
        assert_eq!(a.head_macs, 8);
        assert_eq!(a.params, 16 + 10);
        assert_eq!(a.ball_queries, 24);
    }
}
