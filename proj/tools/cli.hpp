#pragma once

#include <filesystem>
#include <ostream>
#include <string>
#include <vector>

namespace crowdsense::cli {

// Exit codes.
inline constexpr int kOk = 0;
inline constexpr int kInvariantViolation = 1;
inline constexpr int kBadConfig = 2;
inline constexpr int kIoFailure = 3;

int run(int argc, const char* const* argv, std::ostream& out, std::ostream& err);
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

struct DemoOptions {
    std::filesystem::path out_dir;
    unsigned sources = 7;
    unsigned min_participants = 7;
    unsigned rejected = 0;  // the last `rejected` sources upload malformed data
};

// Scripted end-to-end campaign against a directory-backed store. Writes
// events.jsonl, ledger.csv and demo.json into out_dir.
int protocol_demo(const DemoOptions& options, std::ostream& out, std::ostream& err);

}  // namespace crowdsense::cli
