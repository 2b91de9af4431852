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

#include <string>

#include "detrap/Isa.hpp"
#include "detrap/Triggers.hpp"

using namespace detrap;


const char*
detrap::triggerTargetName(TriggerTarget target)
{
  switch (target)
    {
    case TriggerTarget::ExecPc:     return "exec-pc";
    case TriggerTarget::ExecOpcode: return "exec-opcode";
    case TriggerTarget::LoadAddr:   return "load-addr";
    case TriggerTarget::StoreAddr:  return "store-addr";
    case TriggerTarget::LoadData:   return "load-data";
    case TriggerTarget::StoreData:  return "store-data";
    }
  return "?";
}


const char*
detrap::triggerRelationName(TriggerRelation relation)
{
  switch (relation)
    {
    case TriggerRelation::Eq:   return "eq";
    case TriggerRelation::Neq:  return "neq";
    case TriggerRelation::Geq:  return "geq";
    case TriggerRelation::Lt:   return "lt";
    case TriggerRelation::Mask: return "mask";
    }
  return "?";
}


std::optional<TriggerTarget>
detrap::triggerTargetByName(const std::string& name)
{
  for (unsigned i = 0; i <= unsigned(TriggerTarget::StoreData); ++i)
    if (name == triggerTargetName(TriggerTarget(i)))
      return TriggerTarget(i);
  return std::nullopt;
}


std::optional<TriggerRelation>
detrap::triggerRelationByName(const std::string& name)
{
  for (unsigned i = 0; i <= unsigned(TriggerRelation::Mask); ++i)
    if (name == triggerRelationName(TriggerRelation(i)))
      return TriggerRelation(i);
  return std::nullopt;
}


bool
detrap::triggerMatches(const TriggerConfig& config, const InstrContext& ctx)
{
  if (not config.enabled)
    return false;

  uint32_t value = 0;
  switch (config.target)
    {
    case TriggerTarget::ExecPc:
      value = ctx.pc;
      break;
    case TriggerTarget::ExecOpcode:
      value = ctx.opcode;
      break;
    case TriggerTarget::LoadAddr:
    case TriggerTarget::LoadData:
      if (not ctx.memAccess or ctx.memAccess->isStore)
        return false;
      value = config.target == TriggerTarget::LoadAddr ?
        ctx.memAccess->address : ctx.memAccess->data;
      break;
    case TriggerTarget::StoreAddr:
    case TriggerTarget::StoreData:
      if (not ctx.memAccess or not ctx.memAccess->isStore)
        return false;
      value = config.target == TriggerTarget::StoreAddr ?
        ctx.memAccess->address : ctx.memAccess->data;
      break;
    }

  switch (config.relation)
    {
    case TriggerRelation::Eq:   return value == config.compare;
    case TriggerRelation::Neq:  return value != config.compare;
    case TriggerRelation::Geq:  return value >= config.compare;
    case TriggerRelation::Lt:   return value < config.compare;
    case TriggerRelation::Mask:
      return (value & config.mask) == (config.compare & config.mask);
    }
  return false;
}


TriggerFile::TriggerFile(unsigned count, unsigned maxChainLength)
  : triggers_(count), maxChainLength_(maxChainLength)
{ }


uint32_t
TriggerFile::packTdata1(const TriggerConfig& config)
{
  if (not config.enabled)
    return 0;   // disabled triggers read back as all zero
  uint32_t value = 2u << 28;   // type: match control
  value |= 1u << 27;
  value |= uint32_t(config.target) << 24;
  value |= uint32_t(config.relation) << 21;
  value |= uint32_t(config.chain) << 20;
  return value;
}


TriggerConfig
TriggerFile::unpackTdata1(uint32_t value)
{
  TriggerConfig config;
  if (((value >> 27) & 1) == 0)
    return config;   // disabled

  unsigned target = (value >> 24) & 7;
  unsigned relation = (value >> 21) & 7;
  if (target > unsigned(TriggerTarget::StoreData) or
      relation > unsigned(TriggerRelation::Mask))
    return config;   // unsupported combination collapses to disabled

  config.enabled = true;
  config.target = TriggerTarget(target);
  config.relation = TriggerRelation(relation);
  config.chain = (value >> 20) & 1;
  return config;
}


void
TriggerFile::legalizeChains()
{
  if (triggers_.empty())
    return;

  // The last trigger never chains forward.
  triggers_.back().chain = false;

  // Clear chain bits that would extend any run past maxChainLength.
  unsigned runLength = 1;
  for (auto& trigger : triggers_)
    {
      if (trigger.chain and runLength >= maxChainLength_)
        trigger.chain = false;
      runLength = trigger.chain ? runLength + 1 : 1;
    }
}


void
TriggerFile::setTrigger(unsigned index, const TriggerConfig& config)
{
  if (index >= triggers_.size())
    return;
  TriggerConfig legal = unpackTdata1(packTdata1(config));
  legal.compare = config.compare;
  legal.mask = config.mask;
  triggers_.at(index) = legal;
  legalizeChains();
}


void
TriggerFile::writeCsr(uint16_t csr, uint32_t value)
{
  switch (csr)
    {
    case csrTselect:
      tselect_ = value < triggers_.size() ? value :
        unsigned(triggers_.size()) - 1;
      break;
    case csrTdata1:
      {
        TriggerConfig config = unpackTdata1(value);
        config.compare = triggers_.at(tselect_).compare;
        config.mask = triggers_.at(tselect_).mask;
        triggers_.at(tselect_) = config;
        legalizeChains();
      }
      break;
    case csrTdata2:
      triggers_.at(tselect_).compare = value;
      break;
    default:
      break;
    }
}


uint32_t
TriggerFile::readCsr(uint16_t csr) const
{
  switch (csr)
    {
    case csrTselect:
      return tselect_;
    case csrTdata1:
      return packTdata1(triggers_.at(tselect_));
    case csrTdata2:
      return triggers_.at(tselect_).compare;
    default:
      return 0;
    }
}


std::optional<TriggerHit>
TriggerFile::evaluate(const InstrContext& ctx) const
{
  unsigned i = 0;
  while (i < triggers_.size())
    {
      // Find the chain run starting at i.
      unsigned last = i;
      while (last + 1 < triggers_.size() and triggers_.at(last).chain)
        ++last;

      bool allMatch = true;
      for (unsigned k = i; k <= last; ++k)
        if (not triggerMatches(triggers_.at(k), ctx))
          {
            allMatch = false;
            break;
          }

      if (allMatch)
        return TriggerHit{ i, last - i + 1 };

      i = last + 1;
    }
  return std::nullopt;
}
