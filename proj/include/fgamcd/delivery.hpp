#pragma once

#include "fgamcd/beamforming.hpp"
#include "fgamcd/environment.hpp"

namespace fgamcd::delivery {

enum class Mode {
  comp_broadcast,   // joint robust broadcast from the participating set
  tdma_unicast,     // per-user time slots, MRT from participating nodes
  per_node,         // no cooperation: each node serves its own users
  hybrid_multicast  // popularity-gated broadcast/unicast split
};

struct Config {
  Mode mode = Mode::comp_broadcast;
  double hybrid_threshold = 0.0;  // requester count must exceed this to broadcast
  bool use_closed_form_single_user = true;
  beam::SolverConfig solver;
  double dc_penalty = 1.0;
};

// Transmission-mode selector for hybrid multicasting.
enum class TransmissionMode { comp_broadcast, unicast };
TransmissionMode hybrid_multicast_mode(int requesting_count, double eps_hot);

// Builds the current-PB beamforming instance from the environment state.
beam::BeamformingInstance make_instance(const env::Environment& e,
                                        const std::vector<int>& lambda, double dc_penalty);

// Evaluates the delivery of the current PB for the given decision. Fills
// certified rates, status, and (for sequential modes) the broadcast delay.
env::DeliveryOutcome evaluate(const env::Environment& e, const env::StepDecision& decision,
                              const Config& cfg);

}  // namespace fgamcd::delivery
