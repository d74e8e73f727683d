#pragma once

#include <string>

namespace multires {

inline constexpr const char* kVersion = "0.1.0";

// Exit codes.
inline constexpr int kExitOk = 0;
inline constexpr int kExitValidation = 2;
inline constexpr int kExitNumerical = 3;

// Entry point of the `multires` executable: simulate, fit, summarize, holdout.
int run_cli(int argc, char** argv);

}  // namespace multires
