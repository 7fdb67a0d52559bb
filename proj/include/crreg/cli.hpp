#pragma once

namespace crreg {

/// Entry point of the `crreg` command-line tool. Metric results go to
/// standard output as `name value` lines, progress and errors to standard
/// error. Returns the process exit code.
int run(int argc, char **argv);

} // namespace crreg
