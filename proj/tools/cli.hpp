#pragma once

#include <iosfwd>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace ontonorm::cli {

enum ExitCode : int { kOk = 0, kDataError = 1, kUsageError = 2 };

// Parses argv (without the program name) and runs the selected command.
// Data goes to files or `out`; diagnostics go to `err`.
int route(std::span<const std::string> args, std::ostream& out, std::ostream& err);

std::vector<std::string> command_names();

// Long flag names ("--k", ...) a command declares, and its --help text.
std::vector<std::string> declared_flags(std::string_view command);
std::string help_text(std::string_view command);

}  // namespace ontonorm::cli
