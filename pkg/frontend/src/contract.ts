// Enum lists come from the contract file the Python package ships, so the
// UI can never drift from the service's validation.
import contract from "../../src/phenopipe/contracts/label_enums.json";

export type TaskKind = "suitability" | "morphology";
export type MorphologyField = "color" | "shape" | "splotches";

export const TASKS: readonly TaskKind[] = ["suitability", "morphology"];

export const SUITABILITY_OPTIONS: readonly string[] = contract.suitability;

export interface MorphologyGroup {
    field: MorphologyField;
    title: string;
    options: readonly string[];
}

export const MORPHOLOGY_GROUPS: readonly MorphologyGroup[] = [
    { field: "color", title: "Leaf color", options: contract.color },
    { field: "shape", title: "Leaf shape", options: contract.shape },
    { field: "splotches", title: "Brown splotches", options: contract.splotches },
];

export const CONTRACT = contract;
