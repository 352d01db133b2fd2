// Copyright 2026 The flexrank Authors
// SPDX-License-Identifier: Apache-2.0

#include "flexrank/checkpoint.hpp"

#include <istream>
#include <ostream>
#include <sstream>

#include "flexrank/errors.hpp"

namespace flexrank {

namespace {

constexpr const char* kMagic = "flexrank-checkpoint 1";

std::string next_line(std::istream& in, const char* what)
{
    std::string line;
    if (!std::getline(in, line)) {
        throw ParseError(std::string("checkpoint: unexpected end of input, expected ") + what);
    }
    if (!line.empty() && line.back() == '\r') {
        line.pop_back();
    }
    return line;
}

// Reads "key value" and returns value.
std::string keyed(std::istream& in, const std::string& key)
{
    const std::string line = next_line(in, key.c_str());
    if (line.rfind(key + " ", 0) != 0) {
        throw ParseError("checkpoint: expected '" + key + " ...', got '" + line + "'");
    }
    return line.substr(key.size() + 1);
}

std::size_t keyed_count(std::istream& in, const std::string& key)
{
    const std::string text = keyed(in, key);
    std::size_t pos = 0;
    unsigned long long v = 0;
    try {
        v = std::stoull(text, &pos);
    } catch (const std::exception&) {
        pos = 0;
    }
    if (pos != text.size() || text.empty() || text.front() == '-') {
        throw ParseError("checkpoint: '" + key + "' is not a count: '" + text + "'");
    }
    return static_cast<std::size_t>(v);
}

void expect(std::istream& in, const std::string& keyword)
{
    const std::string line = next_line(in, keyword.c_str());
    if (line != keyword) {
        throw ParseError("checkpoint: expected '" + keyword + "', got '" + line + "'");
    }
}

Matrix read_block(std::istream& in, const std::string& keyword, std::size_t rows, std::size_t cols)
{
    expect(in, keyword);
    Matrix m = read_csv(in, rows);
    if (m.cols() != cols) {
        throw ParseError("checkpoint: block " + keyword + " has " + std::to_string(m.cols()) + " columns, expected " +
                         std::to_string(cols));
    }
    return m;
}

} // namespace

void write_adapter_record(std::ostream& out, const SvdAdapter& a)
{
    out << "adapter " << a.id() << '\n'
        << "d_out " << a.d_out() << '\n'
        << "d_in " << a.d_in() << '\n'
        << "rank " << a.rank() << '\n'
        << "r_init " << a.r_init() << '\n'
        << "r_max " << a.r_max() << '\n'
        << "alpha " << format_double(a.alpha()) << '\n'
        << "vector_std " << format_double(a.vector_std()) << '\n';
    out << "W\n";
    write_csv(out, a.base_w());
    out << "P\n";
    write_csv(out, a.p());
    out << "lambda\n";
    write_csv(out, Matrix(1, a.rank(), a.lambda()));
    out << "Q\n";
    write_csv(out, a.q());
    out << "end\n";
}

SvdAdapter read_adapter_record(std::istream& in)
{
    std::string id = keyed(in, "adapter");
    const std::size_t d_out = keyed_count(in, "d_out");
    const std::size_t d_in = keyed_count(in, "d_in");
    const std::size_t rank = keyed_count(in, "rank");
    const std::size_t r_init = keyed_count(in, "r_init");
    const std::size_t r_max = keyed_count(in, "r_max");
    const double alpha = parse_double(keyed(in, "alpha"));
    const double vector_std = parse_double(keyed(in, "vector_std"));
    if (d_out == 0 || d_in == 0 || rank == 0) {
        throw ParseError("checkpoint: adapter '" + id + "' has an empty dimension");
    }
    Matrix w = read_block(in, "W", d_out, d_in);
    Matrix p = read_block(in, "P", d_out, rank);
    Matrix lambda = read_block(in, "lambda", 1, rank);
    Matrix q = read_block(in, "Q", rank, d_in);
    expect(in, "end");
    try {
        return SvdAdapter(std::move(id), std::move(w), std::move(p),
                          std::vector<double>(lambda.data().begin(), lambda.data().end()), std::move(q), r_init, r_max,
                          alpha, vector_std);
    } catch (const ParseError&) {
        throw;
    } catch (const Error& e) {
        throw ParseError(std::string("checkpoint: invalid adapter record: ") + e.what());
    }
}

void write_checkpoint(std::ostream& out, const ToyModel& model)
{
    out << kMagic << '\n';
    for (std::size_t i = 0; i < model.layer_count(); ++i) {
        const LinearLayer* lin = model.linear(i);
        if (lin == nullptr) {
            continue;
        }
        if (const SvdAdapter* a = lin->adapter()) {
            write_adapter_record(out, *a);
        }
        if (lin->bias) {
            out << "bias " << i << '\n';
            write_csv(out, Matrix(1, lin->bias->size(), *lin->bias));
            out << "end\n";
        }
    }
}

std::string checkpoint_to_string(const ToyModel& model)
{
    std::ostringstream out;
    write_checkpoint(out, model);
    return out.str();
}

Checkpoint read_checkpoint(std::istream& in)
{
    if (next_line(in, "checkpoint header") != kMagic) {
        throw ParseError("checkpoint: missing 'flexrank-checkpoint 1' header");
    }
    Checkpoint cp;
    for (;;) {
        const auto pos = in.tellg();
        std::string line;
        if (!std::getline(in, line)) {
            break;
        }
        if (line.empty()) {
            continue;
        }
        if (line.rfind("adapter ", 0) == 0) {
            in.seekg(pos);
            cp.adapters.push_back(read_adapter_record(in));
        } else if (line.rfind("bias ", 0) == 0) {
            std::size_t layer = 0;
            try {
                layer = std::stoul(line.substr(5));
            } catch (const std::exception&) {
                throw ParseError("checkpoint: bad bias header '" + line + "'");
            }
            Matrix row = read_csv(in, 1);
            expect(in, "end");
            cp.biases.emplace_back(layer, std::vector<double>(row.data().begin(), row.data().end()));
        } else {
            throw ParseError("checkpoint: unexpected line '" + line + "'");
        }
    }
    return cp;
}

void restore_checkpoint(ToyModel& model, const Checkpoint& checkpoint)
{
    for (const SvdAdapter& saved : checkpoint.adapters) {
        SvdAdapter* target = model.find_adapter(saved.id());
        if (target == nullptr) {
            throw ConfigError("checkpoint adapter '" + saved.id() + "' not present in model");
        }
        if (target->d_out() != saved.d_out() || target->d_in() != saved.d_in()) {
            throw ShapeError("checkpoint adapter '" + saved.id() + "' has different dimensions");
        }
        if (target->base_w() != saved.base_w() || target->r_init() != saved.r_init() ||
            target->r_max() != saved.r_max() || target->alpha() != saved.alpha()) {
            throw ConfigError("checkpoint adapter '" + saved.id() + "' was saved from a different model");
        }
        target->set_factors(saved.p(), saved.lambda(), saved.q());
    }
    for (const auto& [layer, bias] : checkpoint.biases) {
        std::vector<double>& target = model.bias_mut(layer);
        if (target.size() != bias.size()) {
            throw ShapeError("checkpoint bias for layer " + std::to_string(layer) + " has wrong length");
        }
        target = bias;
    }
}

} // namespace flexrank
