#pragma once

#include <json.hpp>

#include "lfg/eval.hpp"

namespace lfg::detail {

nlohmann::json report_json(const EvalReport& r);
EvalReport report_from(const nlohmann::json& j);

}  // namespace lfg::detail
