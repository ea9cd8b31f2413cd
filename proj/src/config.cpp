// SPDX-License-Identifier: Apache-2.0

#include "envsem/config.hpp"

#include <algorithm>
#include <string>

namespace envsem {

namespace {

Json vec3_json(Vec3 v) { return Json::array({v.x, v.y, v.z}); }

Vec3 vec3_from(const Json& j, const char* what) {
    if (!j.is_array() || j.size() != 3) throw ConfigError(std::string(what) + " must be a 3-element array");
    return {j[0].get<double>(), j[1].get<double>(), j[2].get<double>()};
}

template <class T>
void read_if(const Json& j, const char* key, T& out) {
    if (!j.contains(key)) return;
    try {
        out = j.at(key).get<T>();
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("bad value for '") + key + "': " + e.what());
    }
}

} // namespace

void require_known_keys(const Json& j, std::initializer_list<const char*> allowed, const char* where) {
    if (!j.is_object()) throw ConfigError(std::string(where) + " must be a JSON object");
    for (const auto& item : j.items()) {
        const bool known = std::any_of(allowed.begin(), allowed.end(),
                                       [&](const char* k) { return item.key() == k; });
        if (!known) throw ConfigError(std::string("unknown key '") + item.key() + "' in " + where);
    }
}

Json to_json(const SceneConfig& c) {
    Json cams = Json::array();
    for (const auto& p : c.camera_poses)
        cams.push_back({{"position", vec3_json(p.position)}, {"yaw", p.yaw}, {"pitch", p.pitch}, {"hfov", p.hfov}});
    Json initial = Json::array();
    for (const auto& v : c.initial_vehicles)
        initial.push_back({{"class", std::string(vehicle_class(v.kind).name)},
                           {"lane", v.lane},
                           {"x", v.x},
                           {"speed", v.speed}});
    return {
        {"street_length_m", c.street_length_m},
        {"lane_count", c.lane_count},
        {"lane_width_m", c.lane_width_m},
        {"sidewalk_width_m", c.sidewalk_width_m},
        {"building_setback_m", c.building_setback_m},
        {"building_height_m", c.building_height_m},
        {"bs_position", vec3_json(c.bs_position)},
        {"camera_poses", cams},
        {"camera_aspect", c.camera_aspect},
        {"slot_duration_s", c.slot_duration_s},
        {"frame_count", c.frame_count},
        {"spawn_rate", c.spawn_rate},
        {"speed_range_mps", Json::array({c.speed_range_mps.first, c.speed_range_mps.second})},
        {"seed", c.seed},
        {"warmup_slots", c.warmup_slots},
        {"initial_vehicles", initial},
    };
}

SceneConfig scene_config_from_json(const Json& j) {
    require_known_keys(j,
                       {"street_length_m", "lane_count", "lane_width_m", "sidewalk_width_m",
                        "building_setback_m", "building_height_m", "bs_position", "camera_poses",
                        "camera_aspect", "slot_duration_s", "frame_count", "spawn_rate",
                        "speed_range_mps", "seed", "warmup_slots", "initial_vehicles"},
                       "scene config");
    SceneConfig c;
    read_if(j, "street_length_m", c.street_length_m);
    read_if(j, "lane_count", c.lane_count);
    read_if(j, "lane_width_m", c.lane_width_m);
    read_if(j, "sidewalk_width_m", c.sidewalk_width_m);
    read_if(j, "building_setback_m", c.building_setback_m);
    read_if(j, "building_height_m", c.building_height_m);
    if (j.contains("bs_position")) c.bs_position = vec3_from(j["bs_position"], "bs_position");
    if (j.contains("camera_poses")) {
        c.camera_poses.clear();
        for (const auto& p : j["camera_poses"]) {
            require_known_keys(p, {"position", "yaw", "pitch", "hfov"}, "camera pose");
            CameraPose pose;
            pose.position = vec3_from(p.at("position"), "camera position");
            read_if(p, "yaw", pose.yaw);
            read_if(p, "pitch", pose.pitch);
            read_if(p, "hfov", pose.hfov);
            c.camera_poses.push_back(pose);
        }
    }
    read_if(j, "camera_aspect", c.camera_aspect);
    read_if(j, "slot_duration_s", c.slot_duration_s);
    read_if(j, "frame_count", c.frame_count);
    read_if(j, "spawn_rate", c.spawn_rate);
    if (j.contains("speed_range_mps")) {
        const auto& r = j["speed_range_mps"];
        if (!r.is_array() || r.size() != 2) throw ConfigError("speed_range_mps must be [min, max]");
        c.speed_range_mps = {r[0].get<double>(), r[1].get<double>()};
    }
    read_if(j, "seed", c.seed);
    read_if(j, "warmup_slots", c.warmup_slots);
    if (j.contains("initial_vehicles")) {
        for (const auto& v : j["initial_vehicles"]) {
            require_known_keys(v, {"class", "lane", "x", "speed"}, "initial vehicle");
            InitialVehicle iv;
            if (v.contains("class")) iv.kind = vehicle_kind_from_name(v["class"].get<std::string>());
            read_if(v, "lane", iv.lane);
            read_if(v, "x", iv.x);
            read_if(v, "speed", iv.speed);
            c.initial_vehicles.push_back(iv);
        }
    }
    c.validate();
    return c;
}

Json to_json(const RayTraceConfig& c) {
    Json j = {
        {"carrier_hz", c.carrier_hz},
        {"subcarriers", c.subcarriers},
        {"subcarrier_spacing_hz", c.subcarrier_spacing_hz},
        {"antennas", c.antennas},
        {"antenna_spacing_m", c.antenna_spacing_m},
        {"max_paths", c.max_paths},
        {"reflection", Json::array({c.reflection.real(), c.reflection.imag()})},
        {"noise_power_w", c.noise_power_w},
        {"tx_power_w", c.tx_power_w},
    };
    j["bs_antenna_height"] = c.bs_antenna_height ? Json(*c.bs_antenna_height) : Json(nullptr);
    return j;
}

RayTraceConfig ray_config_from_json(const Json& j) {
    require_known_keys(j,
                       {"carrier_hz", "subcarriers", "subcarrier_spacing_hz", "antennas",
                        "antenna_spacing_m", "max_paths", "reflection", "noise_power_w", "tx_power_w",
                        "bs_antenna_height"},
                       "ray-trace config");
    RayTraceConfig c;
    read_if(j, "carrier_hz", c.carrier_hz);
    read_if(j, "subcarriers", c.subcarriers);
    read_if(j, "subcarrier_spacing_hz", c.subcarrier_spacing_hz);
    read_if(j, "antennas", c.antennas);
    read_if(j, "antenna_spacing_m", c.antenna_spacing_m);
    read_if(j, "max_paths", c.max_paths);
    if (j.contains("reflection")) {
        const auto& r = j["reflection"];
        if (!r.is_array() || r.size() != 2) throw ConfigError("reflection must be [re, im]");
        c.reflection = {r[0].get<double>(), r[1].get<double>()};
    }
    read_if(j, "noise_power_w", c.noise_power_w);
    read_if(j, "tx_power_w", c.tx_power_w);
    if (j.contains("bs_antenna_height") && !j["bs_antenna_height"].is_null())
        c.bs_antenna_height = j["bs_antenna_height"].get<double>();
    c.validate();
    return c;
}

Json to_json(Resolution r) { return {{"height", r.height}, {"width", r.width}}; }

Resolution resolution_from_json(const Json& j) {
    require_known_keys(j, {"height", "width"}, "resolution");
    Resolution r;
    read_if(j, "height", r.height);
    read_if(j, "width", r.width);
    if (r.height < 16 || r.width < 16) throw ConfigError("render resolution must be at least 16x16");
    return r;
}

} // namespace envsem
