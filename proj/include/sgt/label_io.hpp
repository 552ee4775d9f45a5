#pragma once

#include <istream>
#include <ostream>
#include <vector>

#include "json.hpp"
#include "sgt/glcs_labeler.hpp"
#include "sgt/metrics.hpp"

namespace sgt {

// One label-file record: {tokens, speaker_track, y_sgt, y_gd, y_ged, spans}.
nlohmann::json to_json(const LabeledExample& ex);
LabeledExample labeled_example_from_json(const nlohmann::json& j);

void write_label_file(std::ostream& out, const std::vector<LabeledExample>& examples);
std::vector<LabeledExample> read_label_file(std::istream& in);

nlohmann::json to_json(const MetricReport& report);

}  // namespace sgt
