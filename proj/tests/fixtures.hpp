// Shared test fixtures.
#pragma once

#include "dataset.hpp"
#include "matrix.hpp"
#include "rng.hpp"

namespace fixtures {

using tailgame::Dataset;

// M=200, L=12 synthetic long-tail data with 5% symmetric label flips; the
// flips keep every label's optimum interior so block gradients vanish under
// armijo ascent instead of chasing separable directions forever.
inline Dataset monotone_fixture() {
    tailgame::SynthConfig sc;
    sc.num_labels = 12;
    sc.num_instances = 200;
    sc.num_features = 8;
    sc.exponent = 1.2;
    sc.seed = 42;
    Dataset ds = tailgame::generate_synthetic_longtail(sc);
    tailgame::Rng rng(43);
    for (int m = 0; m < ds.num_instances(); ++m)
        for (int l = 0; l < ds.num_labels(); ++l)
            if (rng.uniform() < 0.05) ds.set_label(m, l, ds.label(m, l) ? 0 : 1);
    return ds;
}

inline Dataset slice(const Dataset& ds, int from, int to) {
    Dataset out(ds.num_features(), ds.num_labels());
    for (int m = from; m < to; ++m) {
        std::vector<int> labels;
        for (int l = 0; l < ds.num_labels(); ++l)
            if (ds.label(m, l)) labels.push_back(l);
        out.add_instance(ds.features(m), labels);
    }
    return out;
}

}  // namespace fixtures
