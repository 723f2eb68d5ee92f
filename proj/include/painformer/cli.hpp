// Copyright 2026 The PainFormer Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//    http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.


#pragma once

#include <iosfwd>
#include <string>
#include <vector>

#include "painformer/backbone.hpp"

namespace painformer::cli {

// Named backbone configurations: painformer (the full model), toy (32x32
// inputs) and slim (224x224 inputs, 160-dim output, small widths).
BackboneConfig backbone_preset(const std::string& name);

// Runs `painformer <command> [flags]` with `args` excluding the program name.
// Returns 0 on success, 2 for usage, contract, config or I/O errors and 1 for
// anything else. Results go to `out`, diagnostics to `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace painformer::cli
