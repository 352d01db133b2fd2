// Copyright 2026 The flexrank Authors
// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <cstddef>
#include <iosfwd>
#include <string>
#include <utility>
#include <vector>

#include "flexrank/adapter.hpp"
#include "flexrank/model.hpp"

namespace flexrank {

/// Text checkpoint of every trainable in a model.
///
///   flexrank-checkpoint 1
///   adapter <id>
///   d_out <n>  d_in <n>  rank <r>  r_init <n>  r_max <n>  alpha <x>  vector_std <x>   (one per line)
///   W / P / lambda / Q    (each a keyword line followed by its CSV rows)
///   end
///   bias <layer index>
///   <one CSV row>
///   end
///
/// Numbers use the shortest round-trip decimal form, so loading is value-exact.
struct Checkpoint {
    std::vector<SvdAdapter> adapters;
    std::vector<std::pair<std::size_t, std::vector<double>>> biases;
};

void write_adapter_record(std::ostream& out, const SvdAdapter& adapter);
SvdAdapter read_adapter_record(std::istream& in);

void write_checkpoint(std::ostream& out, const ToyModel& model);
std::string checkpoint_to_string(const ToyModel& model);
Checkpoint read_checkpoint(std::istream& in);

/// Replaces the model's adapters and biases with the checkpoint's. Adapter
/// ids and shapes must match the model's.
void restore_checkpoint(ToyModel& model, const Checkpoint& checkpoint);

} // namespace flexrank
