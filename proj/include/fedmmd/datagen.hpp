#pragma once

#include <cstdint>
#include <vector>

#include "fedmmd/matrix.hpp"
#include "fedmmd/rng.hpp"

namespace fedmmd {

// Feature-heterogeneous synthetic classification data. Each client draws its
// own two-layer labeling network and feature means:
//   u1, u2 ~ N(0, alpha)          scalar per (client, layer)
//   W_i, b_i ~ N(u_i, 1)          entrywise
//   B ~ N(0, beta);  v_j ~ N(B, 1)
//   x ~ N(v, diag(j^-1.2)),  y = argmax(W2 (T^-1 (W1 x + b1)) + b2)
// alpha scales cross-client variation of the labeling nets, beta the
// variation of the feature means. alpha/beta enter as standard deviations.
struct SynthConfig {
    double alpha = 0.0;
    double beta = 0.0;
    int clients = 8;
    int samples_per_client = 5000;
    double temperature = 2.0;
    int input_dim = 60;
    int hidden_dim = 20;
    int classes = 10;
    uint64_t seed = 7;
};

struct ClientShard {
    int client_id = 0;
    Matrix features;          // n x input_dim
    std::vector<int> labels;  // values in [0, classes)
    std::vector<int> train_idx;
    std::vector<int> test_idx;
};

std::vector<ClientShard> generate_synthetic(const SynthConfig& cfg);

struct DirichletConfig {
    double concentration = 0.5;
    int clients = 5;
    uint64_t seed = 7;
};

// Label-skew partition: for each class, proportions ~ Dirichlet(alpha * 1_N)
// decide how that class's samples split across clients. Exhaustive and
// disjoint; redrawn (up to 100 times) if any client would end up empty.
std::vector<std::vector<int>> dirichlet_partition(const std::vector<int>& labels,
                                                  const DirichletConfig& cfg);

// Deterministic stratified split; classes with a single sample go to train.
void train_test_split(ClientShard& shard, double train_fraction, uint64_t seed);

}  // namespace fedmmd
