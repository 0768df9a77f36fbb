// Copyright 2026 The spatial-templates Authors.
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

// The `spt` command line: ingest, split, synth, train, eval, predict, render
// and weights.

#ifndef SPT_CLI_HPP
#define SPT_CLI_HPP

#include <iosfwd>
#include <string>
#include <vector>

namespace spt::cli {

/// Runs one subcommand. args[0] is the program name. Returns the exit code;
/// errors are reported on `err`.
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

int run(int argc, const char* const* argv);

}  // namespace spt::cli

#endif  // SPT_CLI_HPP
