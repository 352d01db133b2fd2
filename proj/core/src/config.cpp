// Copyright 2026 The flexrank Authors
// SPDX-License-Identifier: Apache-2.0

#include "flexrank/config.hpp"

#include <cstdio>
#include <set>

#include <json.hpp>

#include "flexrank/errors.hpp"

namespace flexrank {

using Json = nlohmann::ordered_json;

namespace {

std::string join(const std::string& path, std::string_view key)
{
    return path.empty() ? std::string(key) : path + "." + std::string(key);
}

// Decodes one JSON object, remembering which keys were read so the rest can
// be rejected as unknown.
class ObjectReader {
public:
    ObjectReader(const Json& node, std::string path) : node_(node), path_(std::move(path))
    {
        if (!node_.is_object()) {
            throw ConfigError(where() + ": expected an object");
        }
    }

    bool has(std::string_view key) const { return node_.contains(std::string(key)); }

    const Json& required(std::string_view key)
    {
        if (!has(key)) {
            throw ConfigError("missing required field '" + join(path_, key) + "'");
        }
        used_.insert(std::string(key));
        return node_.at(std::string(key));
    }

    const Json* optional(std::string_view key)
    {
        if (!has(key)) {
            return nullptr;
        }
        used_.insert(std::string(key));
        return &node_.at(std::string(key));
    }

    std::string path(std::string_view key) const { return join(path_, key); }

    void finish() const
    {
        for (const auto& item : node_.items()) {
            if (!used_.contains(item.key())) {
                throw ConfigError("unknown field '" + join(path_, item.key()) + "'");
            }
        }
    }

private:
    std::string where() const { return path_.empty() ? "config" : "'" + path_ + "'"; }

    const Json& node_;
    std::string path_;
    std::set<std::string> used_;
};

std::int64_t as_int(const Json& j, const std::string& path)
{
    if (!j.is_number_integer()) {
        throw ConfigError("field '" + path + "': expected an integer");
    }
    return j.get<std::int64_t>();
}

std::size_t as_count(const Json& j, const std::string& path)
{
    const auto v = as_int(j, path);
    if (v < 0) {
        throw ConfigError("field '" + path + "': expected a non-negative integer");
    }
    return static_cast<std::size_t>(v);
}

std::uint64_t as_u64(const Json& j, const std::string& path)
{
    if (j.is_number_unsigned()) {
        return j.get<std::uint64_t>();
    }
    return static_cast<std::uint64_t>(as_count(j, path));
}

double as_double(const Json& j, const std::string& path)
{
    if (!j.is_number()) {
        throw ConfigError("field '" + path + "': expected a number");
    }
    return j.get<double>();
}

bool as_bool(const Json& j, const std::string& path)
{
    if (!j.is_boolean()) {
        throw ConfigError("field '" + path + "': expected true or false");
    }
    return j.get<bool>();
}

std::string as_string(const Json& j, const std::string& path)
{
    if (!j.is_string()) {
        throw ConfigError("field '" + path + "': expected a string");
    }
    return j.get<std::string>();
}

// Converts a ParameterError from an enum parser into a ConfigError with the field path.
template <typename F>
auto with_path(const std::string& path, F&& parse)
{
    try {
        return parse();
    } catch (const ParameterError& e) {
        throw ConfigError("field '" + path + "': " + e.what());
    }
}

template <typename T, typename Get>
void read_opt(ObjectReader& r, std::string_view key, T& target, Get get)
{
    if (const Json* j = r.optional(key)) {
        target = get(*j, r.path(key));
    }
}

template <typename T, typename Get>
void read_req(ObjectReader& r, std::string_view key, T& target, Get get)
{
    target = get(r.required(key), r.path(key));
}

ModelTopology decode_model(const Json& node)
{
    ObjectReader r(node, "model");
    ModelTopology m;
    read_req(r, "input_dim", m.input_dim, as_count);
    if (const Json* j = r.optional("loss")) {
        const auto name = as_string(*j, r.path("loss"));
        m.loss = with_path(r.path("loss"), [&] { return loss_kind_from_string(name); });
    }
    const Json& layers = r.required("layers");
    if (!layers.is_array()) {
        throw ConfigError("field 'model.layers': expected an array");
    }
    for (std::size_t i = 0; i < layers.size(); ++i) {
        const std::string path = "model.layers[" + std::to_string(i) + "]";
        ObjectReader lr(layers[i], path);
        LayerSpec spec;
        const auto type = as_string(lr.required("type"), path + ".type");
        spec.type = with_path(path + ".type", [&] { return layer_type_from_string(type); });
        if (spec.type == LayerSpec::Type::linear) {
            spec.out = as_count(lr.required("out"), path + ".out");
            read_opt(lr, "adapter", spec.adapter, as_bool);
            read_opt(lr, "bias", spec.bias, as_bool);
            read_opt(lr, "id", spec.id, as_string);
        }
        lr.finish();
        m.layers.push_back(std::move(spec));
    }
    r.finish();
    return m;
}

Json encode_model(const ModelTopology& m)
{
    Json layers = Json::array();
    for (const auto& spec : m.layers) {
        Json l;
        l["type"] = std::string(to_string(spec.type));
        if (spec.type == LayerSpec::Type::linear) {
            l["out"] = spec.out;
            l["adapter"] = spec.adapter;
            l["bias"] = spec.bias;
            l["id"] = spec.id;
        }
        layers.push_back(std::move(l));
    }
    Json j;
    j["input_dim"] = m.input_dim;
    j["loss"] = std::string(to_string(m.loss));
    j["layers"] = std::move(layers);
    return j;
}

// Splits "a.b.c" into components; array indices are plain numbers.
std::vector<std::string> split_path(std::string_view path)
{
    std::vector<std::string> parts;
    std::size_t start = 0;
    for (;;) {
        const std::size_t dot = path.find('.', start);
        parts.emplace_back(path.substr(start, dot - start));
        if (parts.back().empty()) {
            throw ConfigError("override path '" + std::string(path) + "' has an empty component");
        }
        if (dot == std::string_view::npos) {
            return parts;
        }
        start = dot + 1;
    }
}

void apply_override(Json& doc, const std::string& assignment)
{
    const std::size_t eq = assignment.find('=');
    if (eq == std::string::npos || eq == 0) {
        throw ConfigError("override '" + assignment + "' must look like path=value");
    }
    const std::string path = assignment.substr(0, eq);
    const std::string text = assignment.substr(eq + 1);
    Json value = Json::parse(text, nullptr, false);
    if (value.is_discarded()) {
        value = text;
    }

    Json* node = &doc;
    const auto parts = split_path(path);
    for (std::size_t i = 0; i < parts.size(); ++i) {
        const std::string& key = parts[i];
        const bool last = i + 1 == parts.size();
        if (node->is_array()) {
            std::size_t index = 0;
            try {
                index = std::stoul(key);
            } catch (const std::exception&) {
                throw ConfigError("override '" + path + "': '" + key + "' is not an array index");
            }
            if (index >= node->size()) {
                throw ConfigError("override '" + path + "': index " + key + " out of range");
            }
            node = &(*node)[index];
        } else {
            if (node->is_null()) {
                *node = Json::object();  // missing intermediate section
            }
            if (!node->is_object()) {
                throw ConfigError("override '" + path + "': '" + key + "' is not inside an object");
            }
            node = &(*node)[key];
        }
        if (last) {
            *node = value;
        }
    }
}

ExperimentConfig decode(const Json& doc)
{
    ObjectReader root(doc, "");
    ExperimentConfig c;
    read_req(root, "schema_version", c.schema_version, [](const Json& j, const std::string& p) {
        return static_cast<int>(as_int(j, p));
    });
    if (c.schema_version != kConfigSchemaVersion) {
        throw ConfigError("field 'schema_version': unsupported version " + std::to_string(c.schema_version));
    }
    read_req(root, "name", c.name, as_string);
    TrainConfig& t = c.train;
    read_opt(root, "seed", t.seed, as_u64);
    t.topology = decode_model(root.required("model"));

    if (const Json* j = root.optional("adapter")) {
        ObjectReader r(*j, "adapter");
        read_opt(r, "r_init", t.adapter.r_init, as_count);
        // r_max defaults to twice r_init.
        t.adapter.r_max = 2 * t.adapter.r_init;
        read_opt(r, "r_max", t.adapter.r_max, as_count);
        read_opt(r, "alpha", t.adapter.alpha, as_double);
        read_opt(r, "vector_std", t.adapter.vector_std, as_double);
        r.finish();
    }

    {
        ObjectReader r(root.required("task"), "task");
        const auto kind = as_string(r.required("kind"), "task.kind");
        t.task.kind = with_path("task.kind", [&] { return task_kind_from_string(kind); });
        if (const Json* ranks = r.optional("teacher_ranks")) {
            if (!ranks->is_array()) {
                throw ConfigError("field 'task.teacher_ranks': expected an array");
            }
            for (std::size_t i = 0; i < ranks->size(); ++i) {
                t.task.teacher_ranks.push_back(as_count((*ranks)[i], "task.teacher_ranks[" + std::to_string(i) + "]"));
            }
        }
        read_opt(r, "noise_std", t.task.noise_std, as_double);
        read_opt(r, "train_samples", t.task.train_samples, as_count);
        read_opt(r, "eval_samples", t.task.eval_samples, as_count);
        read_opt(r, "delta_scale", t.task.delta_scale, as_double);
        read_opt(r, "blob_separation", t.task.blob_separation, as_double);
        r.finish();
    }

    if (const Json* j = root.optional("optimizer")) {
        ObjectReader r(*j, "optimizer");
        read_opt(r, "lr", t.optimizer.lr, as_double);
        read_opt(r, "beta1", t.optimizer.beta1, as_double);
        read_opt(r, "beta2", t.optimizer.beta2, as_double);
        read_opt(r, "eps", t.optimizer.eps, as_double);
        read_opt(r, "weight_decay", t.optimizer.weight_decay, as_double);
        r.finish();
    }

    read_opt(root, "gamma", t.gamma, as_double);

    {
        ObjectReader r(root.required("schedule"), "schedule");
        read_req(r, "b0", t.schedule.b0, as_int);
        read_req(r, "t_warmup", t.schedule.t_warmup, as_int);
        read_req(r, "t_final", t.schedule.t_final, as_int);
        read_req(r, "total_steps", t.schedule.total_steps, as_int);
        read_req(r, "delta_t", t.schedule.delta_t, as_int);
        r.finish();
    }

    if (const Json* j = root.optional("metric")) {
        ObjectReader r(*j, "metric");
        if (const Json* k = r.optional("kind")) {
            const auto name = as_string(*k, "metric.kind");
            t.metric.variant = with_path("metric.kind", [&] { return metric_variant_from_string(name); });
        }
        read_opt(r, "epsilon", t.metric.epsilon, as_double);
        read_opt(r, "beta1", t.metric.beta1, as_double);
        read_opt(r, "beta2", t.metric.beta2, as_double);
        r.finish();
    }

    if (const Json* j = root.optional("mode")) {
        const auto name = as_string(*j, "mode");
        t.mode = with_path("mode", [&] { return allocator_mode_from_string(name); });
    }

    if (const Json* j = root.optional("init")) {
        ObjectReader r(*j, "init");
        if (const Json* k = r.optional("strategy")) {
            const auto name = as_string(*k, "init.strategy");
            t.init.kind = with_path("init.strategy", [&] { return init_kind_from_string(name); });
        }
        read_opt(r, "small_value", t.init.small_value, as_double);
        r.finish();
    }

    read_opt(root, "batch_size", t.batch_size, as_count);
    read_opt(root, "log_every", t.log_every, as_int);
    read_opt(root, "verify_zero_impact", t.verify_zero_impact, as_bool);

    if (const Json* j = root.optional("output")) {
        ObjectReader r(*j, "output");
        read_opt(r, "dir", c.output.dir, as_string);
        read_opt(r, "trace", c.output.trace, as_string);
        read_opt(r, "metrics", c.output.metrics, as_string);
        read_opt(r, "checkpoint", c.output.checkpoint, as_string);
        read_opt(r, "effective_config", c.output.effective_config, as_string);
        r.finish();
    }

    if (const Json* j = root.optional("overrides")) {
        if (!j->is_array()) {
            throw ConfigError("field 'overrides': expected an array of strings");
        }
        for (std::size_t i = 0; i < j->size(); ++i) {
            c.overrides.push_back(as_string((*j)[i], "overrides[" + std::to_string(i) + "]"));
        }
    }
    root.finish();

    try {
        t.validate();
    } catch (const ConfigError&) {
        throw;
    } catch (const Error& e) {
        throw ConfigError(std::string("invalid config: ") + e.what());
    }
    return c;
}

Json encode(const ExperimentConfig& c)
{
    const TrainConfig& t = c.train;
    Json j;
    j["schema_version"] = c.schema_version;
    j["name"] = c.name;
    j["seed"] = t.seed;
    j["model"] = encode_model(t.topology);
    j["adapter"] = {{"r_init", t.adapter.r_init},
                    {"r_max", t.adapter.r_max},
                    {"alpha", t.adapter.alpha},
                    {"vector_std", t.adapter.vector_std}};
    j["task"] = {{"kind", std::string(to_string(t.task.kind))},
                 {"teacher_ranks", t.task.teacher_ranks},
                 {"noise_std", t.task.noise_std},
                 {"train_samples", t.task.train_samples},
                 {"eval_samples", t.task.eval_samples},
                 {"delta_scale", t.task.delta_scale},
                 {"blob_separation", t.task.blob_separation}};
    j["optimizer"] = {{"lr", t.optimizer.lr},
                      {"beta1", t.optimizer.beta1},
                      {"beta2", t.optimizer.beta2},
                      {"eps", t.optimizer.eps},
                      {"weight_decay", t.optimizer.weight_decay}};
    j["gamma"] = t.gamma;
    j["schedule"] = {{"b0", t.schedule.b0},
                     {"t_warmup", t.schedule.t_warmup},
                     {"t_final", t.schedule.t_final},
                     {"total_steps", t.schedule.total_steps},
                     {"delta_t", t.schedule.delta_t}};
    j["metric"] = {{"kind", std::string(to_string(t.metric.variant))},
                   {"epsilon", t.metric.epsilon},
                   {"beta1", t.metric.beta1},
                   {"beta2", t.metric.beta2}};
    j["mode"] = std::string(to_string(t.mode));
    j["init"] = {{"strategy", std::string(to_string(t.init.kind))}, {"small_value", t.init.small_value}};
    j["batch_size"] = t.batch_size;
    j["log_every"] = t.log_every;
    j["verify_zero_impact"] = t.verify_zero_impact;
    j["output"] = {{"dir", c.output.dir},
                   {"trace", c.output.trace},
                   {"metrics", c.output.metrics},
                   {"checkpoint", c.output.checkpoint},
                   {"effective_config", c.output.effective_config}};
    j["overrides"] = c.overrides;
    return j;
}

} // namespace

ExperimentConfig parse_config(std::string_view json_text, const std::vector<std::string>& overrides)
{
    Json doc = Json::parse(json_text, nullptr, false);
    if (doc.is_discarded()) {
        throw ConfigError("config is not valid JSON");
    }
    for (const auto& o : overrides) {
        apply_override(doc, o);
    }
    ExperimentConfig config = decode(doc);
    config.overrides.insert(config.overrides.end(), overrides.begin(), overrides.end());
    return config;
}

std::string serialize_config(const ExperimentConfig& config) { return encode(config).dump(2) + "\n"; }

std::string config_hash(const ExperimentConfig& config)
{
    // Where artifacts go and how the values were reached do not change the run.
    ExperimentConfig run = config;
    run.output = OutputPaths{};
    run.overrides.clear();
    std::uint64_t hash = 0xcbf29ce484222325ULL;
    for (unsigned char ch : serialize_config(run)) {
        hash ^= ch;
        hash *= 0x100000001b3ULL;
    }
    char buf[17];
    std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(hash));
    return buf;
}

bool operator==(const ExperimentConfig& a, const ExperimentConfig& b)
{
    return serialize_config(a) == serialize_config(b);
}

} // namespace flexrank
