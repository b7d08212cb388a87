#pragma once

namespace dncb {

// Entry point of the command-line tool; returns the process exit code.
int cli_main(int argc, char** argv);

}  // namespace dncb
