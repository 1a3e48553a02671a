//! Callbacks plugged into [`super::fl_centralized`].

use rand::Rng;

use super::{Phase, RoundMessage};
use crate::iforest::{draw_open, value_range};

/// Phase variables for one tree build. Reset to `Initial` before every tree.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PerTreePhaseState {
    pub client_phase: Phase,
    pub server_phase: Phase,
}

impl Default for PerTreePhaseState {
    fn default() -> Self {
        Self { client_phase: Phase::Initial, server_phase: Phase::Initial }
    }
}

impl PerTreePhaseState {
    pub fn reset(&mut self) {
        *self = Self::default();
    }
}

/// A client's split proposal for its current partition.
///
/// Two or more distinct values: uniform in the open `(min, max)`. One distinct
/// value: that value. Empty: uniform over `full_range`, the client's whole
/// private-data range.
pub fn client_process_layer<R: Rng + ?Sized>(
    partition: &[f64],
    full_range: (f64, f64),
    rng: &mut R,
) -> f64 {
    match value_range(partition) {
        Some((lo, hi)) if lo < hi => draw_open(lo, hi, rng),
        Some((v, _)) => v,
        None => {
            let (lo, hi) = full_range;
            if lo < hi {
                rng.random_range(lo..=hi)
            } else {
                lo
            }
        }
    }
}

/// Arithmetic mean of the active clients' proposals.
pub fn server_aggregate_layer(proposals: &[f64]) -> f64 {
    assert!(!proposals.is_empty(), "aggregation needs at least one proposal");
    proposals.iter().sum::<f64>() / proposals.len() as f64
}

/// Client answer in a split round: a resting notice, or a proposal tagged
/// with the client's phase.
pub fn client_processing<R: Rng + ?Sized>(
    state: &PerTreePhaseState,
    partition: Option<&[f64]>,
    full_range: (f64, f64),
    rng: &mut R,
) -> RoundMessage {
    match partition {
        Some(part) if state.client_phase != Phase::ClientResting => {
            RoundMessage::split(state.client_phase, client_process_layer(part, full_range, rng))
        }
        _ => {
            debug_assert_eq!(state.client_phase, Phase::ClientResting, "active client without a task");
            RoundMessage::resting()
        }
    }
}

/// Drops resting clients and averages the rest. With nobody left, the server
/// moves to `EndTree`.
pub fn server_processing(state: &mut PerTreePhaseState, msgs: &[RoundMessage]) -> RoundMessage {
    let splits: Vec<f64> = msgs
        .iter()
        .filter(|m| m.phase != Phase::ClientResting)
        .filter_map(|m| m.data)
        .collect();
    if splits.is_empty() {
        state.server_phase = Phase::EndTree;
        return RoundMessage::end_tree();
    }
    RoundMessage::split(state.server_phase, server_aggregate_layer(&splits))
}

/// Server half of the phase-sync round: publish the server phase.
pub fn server_phase_cb(state: &PerTreePhaseState) -> RoundMessage {
    RoundMessage::phase_echo(state.server_phase)
}

/// Client half of the phase-sync round: echo what the server sent.
pub fn client_phase_cb(received: &RoundMessage) -> RoundMessage {
    RoundMessage::phase_echo(received.phase)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seed::rng_from_seed;

    #[test]
    fn proposal_strictly_inside_partition() {
        let mut rng = rng_from_seed(17);
        for _ in 0..10_000 {
            let v = client_process_layer(&[20.0, 24.0], (0.0, 1.0), &mut rng);
            assert!(v > 20.0 && v < 24.0);
        }
    }

    #[test]
    fn degenerate_partitions() {
        let mut rng = rng_from_seed(1);
        assert_eq!(client_process_layer(&[22.0, 22.0], (18.0, 26.0), &mut rng), 22.0);
        for _ in 0..1000 {
            let v = client_process_layer(&[], (18.0, 26.0), &mut rng);
            assert!((18.0..=26.0).contains(&v));
        }
        assert_eq!(client_process_layer(&[], (5.0, 5.0), &mut rng), 5.0);
    }

    #[test]
    fn aggregation_is_the_mean() {
        assert_eq!(server_aggregate_layer(&[21.0, 23.0]), 22.0);
        assert_eq!(server_aggregate_layer(&[5.0]), 5.0);
        assert_eq!(server_aggregate_layer(&[1.0, 2.0, 3.0]), 2.0);
    }

    #[test]
    #[should_panic]
    fn aggregation_of_nothing_is_a_contract_violation() {
        server_aggregate_layer(&[]);
    }

    #[test]
    fn client_processing_cases() {
        let mut rng = rng_from_seed(2);
        let resting = PerTreePhaseState { client_phase: Phase::ClientResting, ..Default::default() };
        assert_eq!(
            client_processing(&resting, None, (0.0, 1.0), &mut rng),
            RoundMessage { phase: Phase::ClientResting, data: Some(0.0) }
        );
        let active = PerTreePhaseState::default();
        let m = client_processing(&active, Some(&[20.0, 24.0]), (0.0, 1.0), &mut rng);
        assert_eq!(m.phase, Phase::Initial);
        assert!(m.data.unwrap() > 20.0 && m.data.unwrap() < 24.0);
        let m = client_processing(&active, Some(&[21.5]), (0.0, 1.0), &mut rng);
        assert_eq!(m, RoundMessage::split(Phase::Initial, 21.5));
    }

    #[test]
    fn server_processing_filters_resting() {
        let mut st = PerTreePhaseState::default();
        let two = [RoundMessage::split(Phase::Initial, 21.0), RoundMessage::split(Phase::Initial, 23.0)];
        assert_eq!(server_processing(&mut st, &two), RoundMessage::split(Phase::Initial, 22.0));
        let mixed = [RoundMessage::resting(), RoundMessage::split(Phase::Initial, 23.0)];
        assert_eq!(server_processing(&mut st, &mixed), RoundMessage::split(Phase::Initial, 23.0));
        assert_eq!(st.server_phase, Phase::Initial);
        let done = [RoundMessage::resting(), RoundMessage::resting()];
        assert_eq!(server_processing(&mut st, &done), RoundMessage::end_tree());
        assert_eq!(st.server_phase, Phase::EndTree);
    }

    #[test]
    fn phase_sync_server_phase_wins() {
        let mut st = PerTreePhaseState::default();
        assert_eq!(server_phase_cb(&st).phase, Phase::Initial);
        st.server_phase = Phase::EndTree;
        assert_eq!(server_phase_cb(&st), RoundMessage::phase_echo(Phase::EndTree));
        assert_eq!(client_phase_cb(&server_phase_cb(&st)).phase, Phase::EndTree);
        st.reset();
        assert_eq!(st, PerTreePhaseState::default());
    }
}
