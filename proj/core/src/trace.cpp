// Copyright 2026 The flexrank Authors
// SPDX-License-Identifier: Apache-2.0

#include "flexrank/trace.hpp"

#include <cmath>
#include <istream>
#include <limits>
#include <ostream>
#include <sstream>

#include <json.hpp>

#include "flexrank/errors.hpp"

namespace flexrank {

using Json = nlohmann::ordered_json;

Trace make_trace(const TrainResult& result, const std::string& config_hash, std::uint64_t seed, AllocatorMode mode)
{
    Trace trace;
    trace.header.config_hash = config_hash;
    trace.header.seed = seed;
    trace.header.mode = mode;
    trace.header.adapters = result.adapters;
    trace.events = result.events;
    trace.divergence = result.divergence;
    TraceSummary summary;
    summary.steps_completed = result.steps_completed;
    summary.allocation_steps = result.allocation_steps;
    summary.final_train_loss = result.final_train_loss;
    summary.final_eval_loss = result.final_eval_loss;
    for (const SvdAdapter* a : result.model.adapters()) {
        summary.final_ranks.push_back(a->rank());
    }
    trace.summary = std::move(summary);
    return trace;
}

void write_trace(std::ostream& out, const Trace& trace)
{
    Json adapters = Json::array();
    for (const auto& a : trace.header.adapters) {
        adapters.push_back({{"id", a.id}, {"r_init", a.r_init}, {"r_max", a.r_max}, {"d_out", a.d_out}, {"d_in", a.d_in}});
    }
    const Json header = {{"type", "header"},
                         {"format_version", trace.header.format_version},
                         {"config_hash", trace.header.config_hash},
                         {"seed", trace.header.seed},
                         {"mode", std::string(to_string(trace.header.mode))},
                         {"adapters", adapters}};
    out << header.dump() << '\n';
    for (const auto& e : trace.events) {
        const Json record = {{"type", "event"},
                             {"step", e.step},
                             {"adapter", e.adapter_id},
                             {"action", std::string(to_string(e.action))},
                             {"rank_before", e.rank_before},
                             {"rank_after", e.rank_after},
                             {"score", e.score},
                             {"detail", e.detail},
                             {"direction", e.direction}};
        out << record.dump() << '\n';
    }
    if (trace.divergence) {
        // JSON has no representation for NaN or infinity; keep the value as text.
        const Json record = {{"type", "divergence"},
                             {"step", trace.divergence->step},
                             {"loss", std::isfinite(trace.divergence->loss)
                                          ? Json(format_double(trace.divergence->loss))
                                          : Json(std::to_string(trace.divergence->loss))},
                             {"reason", trace.divergence->reason}};
        out << record.dump() << '\n';
    }
    if (trace.summary) {
        const auto& s = *trace.summary;
        const Json record = {{"type", "summary"},
                             {"steps_completed", s.steps_completed},
                             {"allocation_steps", s.allocation_steps},
                             {"final_train_loss", std::isfinite(s.final_train_loss) ? Json(s.final_train_loss) : Json()},
                             {"final_eval_loss", std::isfinite(s.final_eval_loss) ? Json(s.final_eval_loss) : Json()},
                             {"final_ranks", s.final_ranks}};
        out << record.dump() << '\n';
    }
}

std::string trace_to_string(const Trace& trace)
{
    std::ostringstream out;
    write_trace(out, trace);
    return out.str();
}

namespace {

[[noreturn]] void fail(std::size_t line, const std::string& what)
{
    throw ReplayError("trace line " + std::to_string(line) + ": " + what);
}

const Json& field(const Json& record, const char* key, std::size_t line)
{
    if (!record.contains(key)) {
        fail(line, std::string("missing field '") + key + "'");
    }
    return record.at(key);
}

std::int64_t int_field(const Json& record, const char* key, std::size_t line)
{
    const Json& j = field(record, key, line);
    if (!j.is_number_integer()) {
        fail(line, std::string("field '") + key + "' is not an integer");
    }
    return j.get<std::int64_t>();
}

std::size_t count_field(const Json& record, const char* key, std::size_t line)
{
    const auto v = int_field(record, key, line);
    if (v < 0) {
        fail(line, std::string("field '") + key + "' is negative");
    }
    return static_cast<std::size_t>(v);
}

std::string string_field(const Json& record, const char* key, std::size_t line)
{
    const Json& j = field(record, key, line);
    if (!j.is_string()) {
        fail(line, std::string("field '") + key + "' is not a string");
    }
    return j.get<std::string>();
}

double number_field(const Json& record, const char* key, std::size_t line)
{
    const Json& j = field(record, key, line);
    if (j.is_null()) {
        return std::numeric_limits<double>::quiet_NaN();
    }
    if (!j.is_number()) {
        fail(line, std::string("field '") + key + "' is not a number");
    }
    return j.get<double>();
}

} // namespace

Trace read_trace(std::istream& in)
{
    Trace trace;
    bool have_header = false;
    std::string text;
    std::size_t line = 0;
    while (std::getline(in, text)) {
        ++line;
        if (text.empty()) {
            continue;
        }
        const Json record = Json::parse(text, nullptr, false);
        if (record.is_discarded() || !record.is_object()) {
            fail(line, "not a JSON object (corrupt or truncated record)");
        }
        const std::string type = string_field(record, "type", line);
        if (!have_header && type != "header") {
            fail(line, "expected the header record first");
        }
        if (trace.summary) {
            fail(line, "record after the summary");
        }
        try {
            if (type == "header") {
                if (have_header) {
                    fail(line, "duplicate header");
                }
                have_header = true;
                trace.header.format_version = static_cast<int>(int_field(record, "format_version", line));
                if (trace.header.format_version != kTraceFormatVersion) {
                    fail(line, "unsupported format_version");
                }
                trace.header.config_hash = string_field(record, "config_hash", line);
                const Json& seed = field(record, "seed", line);
                if (!seed.is_number_unsigned() && !seed.is_number_integer()) {
                    fail(line, "field 'seed' is not an integer");
                }
                trace.header.seed = seed.get<std::uint64_t>();
                trace.header.mode = allocator_mode_from_string(string_field(record, "mode", line));
                const Json& adapters = field(record, "adapters", line);
                if (!adapters.is_array()) {
                    fail(line, "field 'adapters' is not an array");
                }
                for (const auto& a : adapters) {
                    trace.header.adapters.push_back({string_field(a, "id", line), count_field(a, "r_init", line),
                                                     count_field(a, "r_max", line), count_field(a, "d_out", line),
                                                     count_field(a, "d_in", line)});
                }
            } else if (type == "event") {
                AllocationEvent e;
                e.step = int_field(record, "step", line);
                e.adapter_id = string_field(record, "adapter", line);
                e.action = allocation_action_from_string(string_field(record, "action", line));
                e.rank_before = count_field(record, "rank_before", line);
                e.rank_after = count_field(record, "rank_after", line);
                e.score = number_field(record, "score", line);
                e.detail = string_field(record, "detail", line);
                e.direction = count_field(record, "direction", line);
                trace.events.push_back(std::move(e));
                trace.event_lines.push_back(line);
            } else if (type == "divergence") {
                Divergence d;
                d.step = int_field(record, "step", line);
                const std::string loss = string_field(record, "loss", line);
                d.loss = loss == "nan" || loss == "-nan" ? std::numeric_limits<double>::quiet_NaN()
                         : loss == "inf"                 ? std::numeric_limits<double>::infinity()
                                                         : parse_double(loss);
                d.reason = string_field(record, "reason", line);
                trace.divergence = std::move(d);
            } else if (type == "summary") {
                TraceSummary s;
                s.steps_completed = int_field(record, "steps_completed", line);
                s.allocation_steps = count_field(record, "allocation_steps", line);
                s.final_train_loss = number_field(record, "final_train_loss", line);
                s.final_eval_loss = number_field(record, "final_eval_loss", line);
                const Json& ranks = field(record, "final_ranks", line);
                if (!ranks.is_array()) {
                    fail(line, "field 'final_ranks' is not an array");
                }
                for (const auto& r : ranks) {
                    if (!r.is_number_integer() || r.get<std::int64_t>() < 0) {
                        fail(line, "final_ranks holds a non-count value");
                    }
                    s.final_ranks.push_back(r.get<std::size_t>());
                }
                trace.summary = std::move(s);
            } else {
                fail(line, "unknown record type '" + type + "'");
            }
        } catch (const ReplayError&) {
            throw;
        } catch (const Error& e) {
            fail(line, e.what());
        }
    }
    if (!have_header) {
        throw ReplayError("trace line " + std::to_string(line + 1) + ": missing header record");
    }
    if (!trace.summary) {
        throw ReplayError("trace line " + std::to_string(line + 1) + ": truncated, no summary record");
    }
    return trace;
}

} // namespace flexrank
