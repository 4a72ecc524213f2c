#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>

#include <cstring>

#include "visforge/error.hpp"
#include "visforge/exporter.hpp"
#include "visforge/image.hpp"
#include "visforge/toolbox.hpp"
#include "visforge/trace.hpp"

namespace py = pybind11;
using namespace visforge;

namespace {

using Pixels = py::array_t<std::uint8_t, py::array::c_style | py::array::forcecast>;

Raster to_raster(const Pixels& a) {
  if (a.ndim() != 3 || a.shape(2) != 3) throw Error(ErrorCode::InvalidImage, "expected an HxWx3 uint8 array");
  Raster r(static_cast<int>(a.shape(1)), static_cast<int>(a.shape(0)));
  std::memcpy(r.rgb.data(), a.data(), r.rgb.size());
  return r;
}

Pixels to_array(const Raster& r) {
  Pixels a({static_cast<py::ssize_t>(r.height), static_cast<py::ssize_t>(r.width), py::ssize_t{3}});
  std::memcpy(a.mutable_data(), r.rgb.data(), r.rgb.size());
  return a;
}

ToolMode mode_from(const std::string& s) {
  if (s == "train") return ToolMode::Train;
  if (s == "infer") return ToolMode::Infer;
  throw Error(ErrorCode::ConfigError, "mode must be train or infer, got " + s);
}

const char* kind_name(SegmentKind k) {
  switch (k) {
    case SegmentKind::Reasoning: return "reasoning";
    case SegmentKind::Function: return "function";
    case SegmentKind::Observation: return "observation";
    case SegmentKind::Answer: return "answer";
    case SegmentKind::PlainText: return "text";
  }
  return "";
}

const char* event_name(StreamEvent::Kind k) {
  switch (k) {
    case StreamEvent::Kind::NeedMore: return "need_more";
    case StreamEvent::Kind::FunctionClosed: return "function";
    case StreamEvent::Kind::AnswerClosed: return "answer";
    case StreamEvent::Kind::Malformed: return "malformed";
  }
  return "";
}

py::dict budget_dict(const PixelBudget& b) {
  py::dict d;
  d["min_pixels"] = b.min_pixels;
  d["max_pixels"] = b.max_pixels;
  d["grid"] = b.grid;
  return d;
}

}  // namespace

PYBIND11_MODULE(_visforge, m) {
  m.doc() = "Bindings for the visforge core library";

  // Module-lifetime handle; raised instances carry the error code name.
  static py::handle error = py::exception<Error>(m, "VisforgeError").release();
  py::register_exception_translator([](std::exception_ptr p) {
    try {
      if (p) std::rethrow_exception(p);
    } catch (const Error& e) {
      py::object exc = py::reinterpret_borrow<py::object>(error)(e.what());
      exc.attr("code") = std::string(to_string(e.code()));
      PyErr_SetObject(error.ptr(), exc.ptr());
    }
  });

  m.def("parse_budget", [](const std::string& spec) { return budget_dict(parse_budget(spec)); }, py::arg("spec"));
  m.def(
      "smart_resize",
      [](int width, int height, const std::string& budget) {
        const Dims d = smart_resize(width, height, parse_budget(budget));
        return std::make_pair(d.width, d.height);
      },
      py::arg("width"), py::arg("height"), py::arg("budget") = "train");

  m.def(
      "resample",
      [](const Pixels& img, int width, int height, const std::string& kernel) {
        Interpolation k = Interpolation::Bicubic;
        if (kernel == "bilinear") k = Interpolation::Bilinear;
        else if (kernel != "bicubic") throw Error(ErrorCode::ConfigError, "unknown kernel " + kernel);
        return to_array(resample(to_raster(img), width, height, k));
      },
      py::arg("image"), py::arg("width"), py::arg("height"), py::arg("kernel") = "bicubic");

  m.def("raster_digest", [](const Pixels& img) { return raster_digest(to_raster(img)); }, py::arg("image"));

  m.def(
      "apply_tool",
      [](const Pixels& img, const std::string& command, const std::string& mode, const std::string& budget) {
        const ImagePtr root = make_original(to_raster(img));
        const ImagePtr out = apply_tool(root, extract_tool_command(command), mode_from(mode), parse_budget(budget));
        return py::make_tuple(to_array(*out->pixels), out->id);
      },
      py::arg("image"), py::arg("command"), py::arg("mode") = "infer", py::arg("budget") = "train",
      "Runs one tool call (function body JSON) on an original image; returns (pixels, image id).");

  m.def(
      "segment_trace",
      [](const std::string& text) {
        py::list out;
        for (const auto& s : segment_trace(text)) out.append(py::make_tuple(kind_name(s.kind), s.body, s.span.begin, s.span.end));
        return out;
      },
      py::arg("text"));

  m.def(
      "scan_stream",
      [](const std::string& buffer, size_t cursor) {
        const ScanResult r = scan_stream(buffer, cursor);
        return py::make_tuple(event_name(r.event.kind), r.event.text, r.cursor);
      },
      py::arg("buffer"), py::arg("cursor") = 0);

  m.def(
      "parse_turn",
      [](const std::string& text) {
        const TurnParse t = parse_turn(text);
        py::dict d;
        d["reasoning"] = t.reasoning;
        d["function"] = t.function_raw;
        d["answer"] = t.answer;
        return d;
      },
      py::arg("text"));

  m.def(
      "parse_command",
      [](const std::string& raw) { return command_to_json(extract_tool_command(raw)).dump(); }, py::arg("raw"),
      "Validates a function body and returns its canonical JSON.");

  m.def(
      "compute_mask",
      [](const std::string& text) {
        py::list out;
        for (const auto& s : compute_mask(text)) out.append(py::make_tuple(s.span.begin, s.span.end, s.mask));
        return out;
      },
      py::arg("text"));

  m.def(
      "masked_nll",
      [](const std::vector<double>& logprobs, const std::vector<int>& mask) { return masked_nll(logprobs, mask); },
      py::arg("logprobs"), py::arg("mask"));

  m.def(
      "apportion", [](const std::vector<double>& weights, size_t total) { return apportion(weights, total); },
      py::arg("weights"), py::arg("total"));
}
