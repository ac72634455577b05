#pragma once

namespace facecycle {

/// Entry point of the `facecycle` command-line tool. Returns the process exit code.
int run_cli(int argc, char** argv);

}  // namespace facecycle
