#pragma once

#include <iosfwd>

namespace plgmi::experiment {

// Exit statuses of the command-line tool.
enum ExitCode : int {
  kExitOk = 0,
  kExitUnexpected = 1,
  kExitInvalidArgument = 2,
  kExitData = 3,
  kExitDependency = 4,
  kExitNumerical = 5,
  kExitIo = 6,
};

int run_cli(int argc, char** argv, std::ostream& out, std::ostream& err);

}  // namespace plgmi::experiment
