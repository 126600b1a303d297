/** The 4x4 speller layout of the 16 arm commands, in canonical order. */

import { COMMAND_NAMES, CommandName } from "./protocol.js";

export const GRID_SIZE = 4;

export function commandGrid(): CommandName[][] {
  const rows: CommandName[][] = [];
  for (let r = 0; r < GRID_SIZE; r++) {
    rows.push(COMMAND_NAMES.slice(r * GRID_SIZE, (r + 1) * GRID_SIZE) as CommandName[]);
  }
  return rows;
}

/** Short button captions; the full name stays in the tooltip. */
export const GRID_LABELS: Record<CommandName, string> = {
  OnOff: "On/Off",
  Forward: "Fwd",
  ForwardLeft: "Fwd L",
  ForwardRight: "Fwd R",
  Backward: "Back",
  BackwardLeft: "Back L",
  BackwardRight: "Back R",
  Up: "Up",
  Down: "Down",
  Left: "Left",
  Right: "Right",
  HandArmSwitch: "Hand/Arm",
  LowSpeed: "Low Spd",
  HighSpeed: "High Spd",
  ShortAction: "Short",
  LongAction: "Long",
};
