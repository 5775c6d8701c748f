use rand::Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{DriftKind, DriftModel, ExperimentConfig, StationModel};
use crate::model::outcome_probabilities;

/// Expected rates (Hz) of every detection channel during one block.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct RateTable {
    /// Coincidences `(++, +-, -+, --)`.
    pub coincidences: [f64; 4],
    /// Singles of D1..D4.
    pub singles: [f64; 4],
    /// Coincidences between Alice's two detectors and between Bob's two.
    pub same_station: [f64; 2],
    /// A coupling factor fell below zero and was clipped.
    pub clipped: bool,
}

/// Relative pump power along a run.
#[derive(Debug, Clone)]
pub struct DriftPath {
    model: DriftModel,
    time: f64,
    value: f64,
}

impl DriftPath {
    pub fn new(model: DriftModel) -> Self {
        Self {
            model,
            time: 0.0,
            value: 1.0,
        }
    }

    fn advance<R: Rng + ?Sized>(&mut self, t: f64, step_sigma: f64, rng: &mut R) -> f64 {
        if t > self.time {
            let z: f64 = StandardNormal.sample(rng);
            self.value = (self.value + step_sigma * (t - self.time).sqrt() * z).max(self.model.floor);
            self.time = t;
        }
        self.value
    }

    /// Mean relative pump power over `[t0, t1]`. Calls must not go back in
    /// time.
    pub fn mean_over<R: Rng + ?Sized>(&mut self, t0: f64, t1: f64, rng: &mut R) -> f64 {
        match self.model.kind {
            DriftKind::None => 1.0,
            DriftKind::Linear { slope } => (1.0 + slope * 0.5 * (t0 + t1)).max(self.model.floor),
            DriftKind::RandomWalk { step_sigma } => {
                let a = self.advance(t0, step_sigma, rng);
                let b = self.advance(t1, step_sigma, rng);
                0.5 * (a + b)
            }
        }
    }
}

/// Coupling factor `max(0, 1 − κ·|θ − θ_nominal|)`; the flag reports
/// clipping.
fn coupling(station: &StationModel, actual: f64, nominal: f64) -> (f64, bool) {
    let c = 1.0 - station.coupling_kappa * (actual - nominal).abs();
    if c < 0.0 {
        (0.0, true)
    } else {
        (c, false)
    }
}

/// Expected rates for setting pair `(x, y)` with the plates actually at
/// `actual_hwp = [θ_A, θ_B]` and relative pump power `drift`.
pub fn expected_rates(config: &ExperimentConfig, x: usize, y: usize, actual_hwp: [f64; 2], drift: f64) -> RateTable {
    let nominal = [config.alice.hwp_targets[x], config.bob.hwp_targets[y]];
    rates_at(config, actual_hwp, nominal, drift)
}

/// Rates with the plates at `actual_hwp`, coupling measured from
/// `nominal_hwp`.
pub(crate) fn rates_at(
    config: &ExperimentConfig,
    actual_hwp: [f64; 2],
    nominal_hwp: [f64; 2],
    drift: f64,
) -> RateTable {
    let (alice, bob) = (&config.alice, &config.bob);
    let (ca, clip_a) = coupling(alice, actual_hwp[0], nominal_hwp[0]);
    let (cb, clip_b) = coupling(bob, actual_hwp[1], nominal_hwp[1]);
    // the configuration was validated, so the model cannot reject it
    let p = outcome_probabilities(&config.source, 2.0 * actual_hwp[0], 2.0 * actual_hwp[1])
        .expect("validated source state and finite angles");

    let pairs = config.source.pair_rate * drift;
    let window = config.coincidence_window;
    let accidental = config.accidental_rate / 4.0;

    // photon-induced singles; the marginal of either station is 1/2
    let sig_a = [0, 1].map(|a| pairs * ca * alice.channel_efficiency(a) * (p[a][0] + p[a][1]));
    let sig_b = [0, 1].map(|b| pairs * cb * bob.channel_efficiency(b) * (p[0][b] + p[1][b]));

    let mut out = RateTable {
        clipped: clip_a || clip_b,
        ..RateTable::default()
    };
    for a in 0..2 {
        for b in 0..2 {
            let true_pairs = pairs * ca * cb * p[a][b] * alice.channel_efficiency(a) * bob.channel_efficiency(b);
            let dark =
                window * (alice.dark_rate * sig_b[b] + sig_a[a] * bob.dark_rate + alice.dark_rate * bob.dark_rate);
            out.coincidences[2 * a + b] = true_pairs + accidental + dark;
        }
    }
    let singles_a = sig_a.map(|s| s + alice.dark_rate);
    let singles_b = sig_b.map(|s| s + bob.dark_rate);
    out.singles = [singles_a[0], singles_a[1], singles_b[0], singles_b[1]];
    out.same_station = [
        config.accidental_rate + window * singles_a[0] * singles_a[1],
        config.accidental_rate + window * singles_b[0] * singles_b[1],
    ];
    out
}
