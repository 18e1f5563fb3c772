// SPDX-License-Identifier: Apache-2.0
//
// Versioned binary tensor container.
//
// Layout (all integers little-endian):
//   magic   8 bytes  "OOPKCKPT"
//   version u32      currently 1
//   n_meta  u32      then n_meta of { u32 klen, key, u32 vlen, value }
//   n_tens  u32      then n_tens of { u32 nlen, name, u8 dtype (0 = f64),
//                     u32 rank, u64 extents[rank], f64 payload[numel] }

#pragma once

#include <map>
#include <string>

#include "oopk/tensor.hpp"

namespace oopk {

struct Checkpoint {
    std::map<std::string, std::string> meta;
    std::map<std::string, Tensor> tensors;

    bool has(const std::string& name) const { return tensors.count(name) > 0; }
    const std::string& meta_at(const std::string& key) const;
};

void save_checkpoint(const std::string& path, const Checkpoint& ckpt);
Checkpoint load_checkpoint(const std::string& path);

}  // namespace oopk
