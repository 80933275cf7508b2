// SPDX-License-Identifier: Apache-2.0

#pragma once

#include <iosfwd>
#include <string>
#include <vector>

namespace rnnlab::cli {

enum ExitCode : int { kOk = 0, kUsage = 1, kNumericAbort = 2, kMissingData = 3 };

/// Entry point of the `rnnlab` executable. Subcommands: train-copy,
/// train-denoise, train-babi, grad-check, grad-probe.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace rnnlab::cli
