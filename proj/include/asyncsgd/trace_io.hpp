#pragma once

#include <filesystem>
#include <iosfwd>
#include <string>

#include <nlohmann/json.hpp>

#include "asyncsgd/trace.hpp"

namespace asyncsgd {

/// Shortest representation that round-trips exactly.
std::string format_double(double v);

inline constexpr const char* kTraceCsvHeader =
    "t,worker,client,tau,eta,grad_norm,f_value,sim_time,assigned,active";

/// One header row, then one row per applied gradient.
void write_trace_csv(std::ostream& os, const RunTrace& trace);

void write_json_file(const std::filesystem::path& path, const nlohmann::json& doc);
nlohmann::json read_json_file(const std::filesystem::path& path);

}  // namespace asyncsgd
