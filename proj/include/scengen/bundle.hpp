#pragma once

#include <map>
#include <string>
#include <vector>

#include "scengen/features.hpp"
#include "scengen/network.hpp"
#include "scengen/trainer.hpp"

namespace scengen {

struct Fingerprint {
    std::string config_hash;
    int bigan_steps = 0;
    int cgan_steps = 0;
};

// Everything needed to reload the five networks and reproduce their outputs
// bit-exactly: specs, parameters, batchnorm running statistics, spectral-norm
// u vectors, the standardization affines and the feature table.
struct ModelBundle {
    static constexpr int kSchemaVersion = 1;
    int schema_version = kSchemaVersion;
    std::map<std::string, Network> nets;
    AffineMap state_affine;
    AffineMap cond_affine;
    AffineMap target_affine;
    std::vector<FeatureSpec> features;
    Fingerprint fingerprint;

    bool has(const std::string& id) const { return nets.count(id) > 0; }
    const Network& net(const std::string& id) const;
    Network& net(const std::string& id);
};

// Bundle directory: manifest.json plus params.bin (little-endian f64 blob
// with a whole-file checksum). Saving a loaded bundle is byte-identical.
void save_bundle(const ModelBundle& bundle, const std::string& dir);
ModelBundle load_bundle(const std::string& dir);

std::uint64_t fnv1a(const void* data, std::size_t n);

}  // namespace scengen
