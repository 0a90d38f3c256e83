#pragma once

#include <string>
#include <vector>

namespace quadapt {

// Exit codes: 0 success, 1 validation failure, 2 numerical failure
// (divergence / NaN / failed gradcheck). Messages go to stderr.
int cli_main(const std::vector<std::string>& args);

}  // namespace quadapt
