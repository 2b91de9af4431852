// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//     http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

#include <cstdlib>
#include <fstream>
#include <iostream>
#include <sstream>

#include <CLI11.hpp>
#include <json.hpp>

#include "detrap/Elf.hpp"
#include "detrap/Errors.hpp"
#include "detrap/Image.hpp"
#include "detrap/Instrument.hpp"
#include "detrap/Layout.hpp"
#include "detrap/Machine.hpp"
#include "detrap/Scanner.hpp"

using nlohmann::json;
using namespace detrap;

namespace
{

  constexpr int exitOk = 0;
  constexpr int exitFindings = 1;
  constexpr int exitInputError = 2;
  constexpr int exitStepLimit = 3;

  std::string readFile(const std::string& path)
  {
    std::ifstream in(path, std::ios::binary);
    if (not in)
      throw Error(ErrorCode::LoadError, "cannot open " + path);
    std::ostringstream out;
    out << in.rdbuf();
    return out.str();
  }

  std::string hexString(uint32_t value)
  {
    std::ostringstream oss;
    oss << "0x" << std::setfill('0') << std::setw(8) << std::hex << value;
    return oss.str();
  }

  MemoryMap loadLayout(const std::string& layoutPath)
  {
    std::vector<SectionSpec> specs;
    std::string path = layoutPath;
    if (path.empty())
      if (const char* env = std::getenv("DETRAP_LAYOUT"))
        path = env;
    if (path.empty())
      specs = defaultSectionSpecs();
    else
      specs = parseLayoutConfig(readFile(path));
    return planLayout(specs);
  }

  json mapToJson(const MemoryMap& map)
  {
    json sections = json::array();
    for (const auto& region : map.regions)
      sections.push_back({
        { "name", region.name },
        { "kind", sectionKindName(region.kind) },
        { "base", region.base },
        { "limit", region.limit },
      });
    return {
      { "sections", sections },
      { "privileged-top", map.privilegedTop },
      { "write-limited-top", map.writeLimitedTop },
      { "shadow-stack-top-entry", map.shadowStackTopEntry },
    };
  }

  MemoryMap mapFromJson(const json& doc)
  {
    const json& mapDoc = doc.contains("map") ? doc.at("map") : doc;
    MemoryMap map;
    const auto& sections = mapDoc.at("sections");
    if (not sections.is_array() or sections.size() != sectionKindCount)
      throw Error(ErrorCode::FormatError, "map needs 8 sections");
    for (const auto& entry : sections)
      {
        auto kind = sectionKindByName(entry.at("kind").get<std::string>());
        if (not kind)
          throw Error(ErrorCode::FormatError, "unknown section kind");
        auto& region = map.region(*kind);
        region.kind = *kind;
        region.name = entry.at("name").get<std::string>();
        region.base = entry.at("base").get<uint32_t>();
        region.limit = entry.at("limit").get<uint32_t>();
      }
    map.privilegedTop = mapDoc.at("privileged-top").get<uint32_t>();
    map.writeLimitedTop = mapDoc.at("write-limited-top").get<uint32_t>();
    map.shadowStackTopEntry =
      mapDoc.at("shadow-stack-top-entry").get<uint32_t>();
    return map;
  }

  json policyToJson(const std::vector<TriggerConfig>& policy)
  {
    json triggers = json::array();
    for (const auto& config : policy)
      triggers.push_back({
        { "target", triggerTargetName(config.target) },
        { "relation", triggerRelationName(config.relation) },
        { "compare", config.compare },
        { "chain", config.chain },
      });
    return { { "triggers", triggers } };
  }

  Image loadImageFile(const std::string& path, const MemoryMap& map)
  {
    std::string bytes = readFile(path);
    if (bytes.size() >= 4 and bytes[0] == 0x7f and bytes[1] == 'E' and
        bytes[2] == 'L' and bytes[3] == 'F')
      return loadElf32(std::span<const uint8_t>(
        reinterpret_cast<const uint8_t*>(bytes.data()), bytes.size()));
    return assemble(bytes, map);
  }

  void printJson(const json& doc)
  {
    std::cout << doc.dump(2) << '\n';
  }

  int cmdLayout(const std::string& layoutPath, const std::string& checkPath)
  {
    if (not checkPath.empty())
      {
        json doc = json::parse(readFile(checkPath));
        MemoryMap map = mapFromJson(doc);
        auto findings = validateLayout(map);
        json out = json::array();
        for (const auto& finding : findings)
          out.push_back({ { "code", finding.code },
                          { "message", finding.message } });
        printJson({ { "valid", findings.empty() }, { "findings", out } });
        return findings.empty() ? exitOk : exitInputError;
      }

    MemoryMap map = loadLayout(layoutPath);
    auto findings = validateLayout(map);
    auto policy = deriveTriggerPolicy(map);
    printJson({ { "map", mapToJson(map) },
                { "policy", policyToJson(policy) } });
    return findings.empty() ? exitOk : exitInputError;
  }

  int cmdScan(const std::string& imagePath, const std::string& layoutPath,
              const std::string& whitelistPath)
  {
    MemoryMap map = loadLayout(layoutPath);
    Image img = loadImageFile(imagePath, map);
    Whitelist wl;
    if (not whitelistPath.empty())
      wl = parseWhitelist(readFile(whitelistPath), img);

    ScanReport report = scan(img, map, wl);
    json findings = json::array();
    for (const auto& finding : report.findings)
      findings.push_back({
        { "rule", finding.rule },
        { "address", hexString(finding.address) },
        { "message", finding.message },
        { "severity",
          finding.severity == Severity::Error ? "error" : "warning" },
      });
    printJson({ { "verdict", report.pass() ? "pass" : "fail" },
                { "findings", findings } });
    std::cerr << formatReport(report);
    return report.pass() ? exitOk : exitFindings;
  }

  int cmdRun(const std::string& imagePath, const std::string& layoutPath,
             uint64_t maxSteps, bool trace, const std::string& injectAt)
  {
    MemoryMap map = loadLayout(layoutPath);
    Image img = loadImageFile(imagePath, map);
    Machine machine(img, map, deriveTriggerPolicy(map));

    std::string traceText;
    if (trace)
      machine.setTrace(&traceText);

    std::optional<uint64_t> injectStep;
    if (not injectAt.empty())
      {
        std::string value = injectAt;
        if (value.rfind("at=", 0) == 0)
          value = value.substr(3);
        injectStep = std::stoull(value);
      }

    uint64_t steps = 0;
    while (machine.status() == MachineStatus::Running and steps < maxSteps)
      {
        if (injectStep and steps == *injectStep)
          machine.injectInterrupt();
        machine.step();
        ++steps;
      }

    if (trace)
      std::cerr << traceText;

    json out;
    out["retired"] = machine.retired();
    out["traps"] = machine.traps();
    out["console"] = machine.console();
    int code;
    if (machine.status() == MachineStatus::Halted)
      {
        out["status"] = "halted";
        out["exit-code"] = machine.haltCode();
        code = exitOk;
      }
    else if (machine.status() == MachineStatus::Terminated)
      {
        out["status"] = "terminated";
        out["reason"] = terminationReasonName(*machine.terminationReason());
        code = exitFindings;
      }
    else
      {
        out["status"] = "step-limit";
        code = exitStepLimit;
      }
    printJson(out);
    return code;
  }

  int cmdBench(const std::string& baselinePath,
               const std::string& instrumentedPath,
               const std::string& layoutPath, uint64_t maxSteps)
  {
    MemoryMap map = loadLayout(layoutPath);
    auto policy = deriveTriggerPolicy(map);

    Image baseImg = loadImageFile(baselinePath, map);
    Image instrImg = loadImageFile(instrumentedPath, map);

    Machine base(baseImg, map, policy);
    base.run(maxSteps);
    Machine instr(instrImg, map, policy);
    for (const auto& symbol : instrImg.symbols)
      if (symbol.name.size() > 11 and
          symbol.name.substr(symbol.name.size() - 11) == "$trampoline")
        instr.watchAddress(symbol.address);
    instr.run(maxSteps);

    if (base.hitStepLimit() or instr.hitStepLimit())
      return exitStepLimit;
    if (base.status() != MachineStatus::Halted or
        instr.status() != MachineStatus::Halted)
      return exitFindings;

    uint64_t trampolineCalls = 0;
    for (const auto& symbol : instrImg.symbols)
      if (symbol.name.size() > 11 and
          symbol.name.substr(symbol.name.size() - 11) == "$trampoline")
        trampolineCalls += instr.watchedCount(symbol.address);

    int64_t delta = int64_t(instr.retired()) - int64_t(base.retired());
    int64_t predicted = int64_t(trampolineCalls) * perCallOverhead;
    printJson({
      { "retired-baseline", base.retired() },
      { "retired-detrap", instr.retired() },
      { "delta", delta },
      { "predicted-delta", predicted },
    });
    return delta == predicted ? exitOk : exitFindings;
  }

}


int
main(int argc, char** argv)
{
  CLI::App app{ "DeTRAP toolkit: layout planning, static scanning, "
                "simulation, and overhead accounting" };
  app.require_subcommand(1);

  std::string layoutPath, checkPath, imagePath, whitelistPath;
  std::string baselinePath, instrumentedPath, injectAt;
  uint64_t maxSteps = 1000000;
  bool trace = false;

  auto* layout = app.add_subcommand("layout",
                                    "plan the memory map and trigger policy");
  layout->add_option("--layout", layoutPath, "layout config file");
  layout->add_option("--check", checkPath, "re-validate a saved map JSON");

  auto* scanCmd = app.add_subcommand("scan", "statically verify an image");
  scanCmd->add_option("image", imagePath, "image file")->required();
  scanCmd->add_option("--layout", layoutPath, "layout config file");
  scanCmd->add_option("--whitelist", whitelistPath, "whitelist file");

  auto* runCmd = app.add_subcommand("run", "simulate an image");
  runCmd->add_option("image", imagePath, "image file")->required();
  runCmd->add_option("--layout", layoutPath, "layout config file");
  runCmd->add_option("--max-steps", maxSteps, "step limit");
  runCmd->add_flag("--trace", trace, "per-instruction trace to stderr");
  runCmd->add_option("--inject-interrupt", injectAt,
                     "inject a timer interrupt (at=<step>)");

  auto* benchCmd = app.add_subcommand("bench",
                                      "compare retired-instruction counts");
  benchCmd->add_option("baseline", baselinePath, "baseline image")
    ->required();
  benchCmd->add_option("instrumented", instrumentedPath, "protected image")
    ->required();
  benchCmd->add_option("--layout", layoutPath, "layout config file");
  benchCmd->add_option("--max-steps", maxSteps, "step limit");

  try
    {
      app.parse(argc, argv);
    }
  catch (const CLI::ParseError& error)
    {
      int code = app.exit(error);
      return code == 0 ? exitOk : exitInputError;
    }

  try
    {
      if (layout->parsed())
        return cmdLayout(layoutPath, checkPath);
      if (scanCmd->parsed())
        return cmdScan(imagePath, layoutPath, whitelistPath);
      if (runCmd->parsed())
        return cmdRun(imagePath, layoutPath, maxSteps, trace, injectAt);
      if (benchCmd->parsed())
        return cmdBench(baselinePath, instrumentedPath, layoutPath, maxSteps);
    }
  catch (const Error& error)
    {
      std::cerr << "error: " << error.what() << '\n';
      return exitInputError;
    }
  catch (const json::exception& error)
    {
      std::cerr << "error: " << error.what() << '\n';
      return exitInputError;
    }
  catch (const std::exception& error)
    {
      std::cerr << "error: " << error.what() << '\n';
      return exitInputError;
    }
  return exitInputError;
}
