// SPDX-License-Identifier: Apache-2.0
//
// Synthetic segmentation scenes, procedural corruption suite, continual
// stream manifests, and PPM/PGM file I/O.

#pragma once

#include <array>
#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

#include "oopk/rng.hpp"
#include "oopk/tensor.hpp"

namespace oopk {

struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

struct SegSample {
    Tensor image;            // [3,H,W] in [0,1]
    std::vector<int> label;  // H*W class ids in [0,K)
    int height = 0, width = 0, num_classes = 0;
};

enum class CorruptionKind { None, Fog, Dark, Noise, Blur };

CorruptionKind corruption_kind_from(const std::string& name);
std::string corruption_kind_name(CorruptionKind k);

struct CorruptionSpec {
    CorruptionKind kind = CorruptionKind::None;
    double severity = 0.0;  // in [0,1]; 0 is the identity
    std::uint64_t seed = 0;
};

// Background gradient plus class-colored geometric shapes (rectangles,
// discs, stripes) with per-instance color jitter; label map alongside.
SegSample gen_scene(std::uint64_t seed, int h, int w, int k);

// Canonical class colors used by gen_scene; separated across classes.
std::vector<std::array<double, 3>> class_palette(int k);

Tensor corrupt(const Tensor& x, const CorruptionSpec& spec);

// Fog core: per-pixel convex blend toward white with the given weight field.
Tensor fog_blend(const Tensor& x, const Tensor& weight);

struct StreamEntry {
    int round = 0;
    std::string domain;
    CorruptionSpec corruption;
    std::string image_path;  // empty when samples are generated on the fly
    std::string label_path;
};

struct DomainSpec {
    std::string name;
    CorruptionKind kind;
    double severity;
};

struct DomainStream {
    std::vector<StreamEntry> entries;  // stream order
    int rounds = 1;
    std::vector<std::string> domains;  // adaptation order
};

// Ordered manifest: rounds x domains x samples, each entry carrying its own
// generation seed so every (round, domain, sample) triple is distinct.
DomainStream build_stream(const std::vector<DomainSpec>& domains, int samples_per_domain,
                          int rounds, std::uint64_t seed);

// Generate the sample behind an entry (scene + corruption), in memory.
SegSample realize_entry(const StreamEntry& entry, int h, int w, int k);

// Line-oriented manifest file with a one-line header.
std::string stream_to_text(const DomainStream& s);
DomainStream stream_from_text(const std::string& text);
void save_stream(const std::string& path, const DomainStream& s);
DomainStream load_stream(const std::string& path);

// Binary PPM (P6, maxval 255) / PGM (P5) with round(v*255) quantization.
void save_ppm(const std::string& path, const Tensor& image);
Tensor load_ppm(const std::string& path);
void save_pgm(const std::string& path, const std::vector<int>& label, int h, int w);
std::vector<int> load_pgm(const std::string& path, int& h, int& w);

void save_sample(const SegSample& s, const std::string& image_path,
                 const std::string& label_path);
SegSample load_sample(const std::string& image_path, const std::string& label_path,
                      int num_classes);

}  // namespace oopk
