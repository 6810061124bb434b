import { describe, expect, it, vi } from "vitest";

import { AnnotationApi } from "../src/api";
import contract from "../../src/phenopipe/contracts/label_enums.json";
import { MORPHOLOGY_GROUPS, SUITABILITY_OPTIONS } from "../src/contract";
import {
    nextIncompleteGroup,
    reduce,
    selectionComplete,
    selectionToLabels,
    type UiState,
} from "../src/state";

const item = { crop_id: "leaf_1", task: "morphology" as const, image_url: "/crops/leaf_1.png" };

function labeling(): Extract<UiState, { phase: "labeling" }> {
    return reduce({ phase: "loading", task: "morphology" }, { type: "task_loaded", item }) as never;
}

describe("enum lists", () => {
    it("come verbatim from the shared contract file", () => {
        expect(SUITABILITY_OPTIONS).toEqual(contract.suitability);
        expect(MORPHOLOGY_GROUPS.map((g) => g.field)).toEqual(["color", "shape", "splotches"]);
        expect(MORPHOLOGY_GROUPS[0].options).toEqual(contract.color);
        expect(MORPHOLOGY_GROUPS[1].options).toEqual(contract.shape);
        expect(MORPHOLOGY_GROUPS[2].options).toEqual(contract.splotches);
        for (const group of MORPHOLOGY_GROUPS) {
            expect(group.options).toHaveLength(4);
        }
    });
});

describe("selection rules", () => {
    it("morphology is complete only with all three choices", () => {
        expect(selectionComplete("morphology", {})).toBe(false);
        expect(selectionComplete("morphology", { color: "yellow" })).toBe(false);
        expect(
            selectionComplete("morphology", { color: "yellow", shape: "ovate", splotches: "low" }),
        ).toBe(true);
    });

    it("suitability needs the good/bad flag", () => {
        expect(selectionComplete("suitability", {})).toBe(false);
        expect(selectionComplete("suitability", { good: false })).toBe(true);
    });

    it("digit shortcuts walk groups in declared order", () => {
        expect(nextIncompleteGroup({})).toBe("color");
        expect(nextIncompleteGroup({ color: "yellow" })).toBe("shape");
        expect(nextIncompleteGroup({ color: "yellow", shape: "ovate" })).toBe("splotches");
        expect(nextIncompleteGroup({ color: "yellow", shape: "ovate", splotches: "low" })).toBe(
            null,
        );
    });

    it("serializes labels exactly as the service expects", () => {
        expect(
            selectionToLabels("morphology", {
                color: "light_green",
                shape: "ovate",
                splotches: "none",
            }),
        ).toEqual({ color: "light_green", shape: "ovate", splotches: "none" });
        expect(selectionToLabels("suitability", { good: true })).toEqual({ good: true });
    });
});

describe("reducer", () => {
    it("loads into labeling with an empty selection", () => {
        const state = labeling();
        expect(state.phase).toBe("labeling");
        expect(state.selection).toEqual({});
        expect(state.submitting).toBe(false);
    });

    it("blocks submit until the selection is complete", () => {
        let state: UiState = labeling();
        expect(reduce(state, { type: "submit_started" })).toBe(state);
        state = reduce(state, { type: "choose", field: "color", value: "yellow" });
        state = reduce(state, { type: "choose", field: "shape", value: "ovate" });
        state = reduce(state, { type: "choose", field: "splotches", value: "low" });
        const submitting = reduce(state, { type: "submit_started" });
        expect(submitting).not.toBe(state);
        expect((submitting as Extract<UiState, { phase: "labeling" }>).submitting).toBe(true);
    });

    it("never allows a second in-flight submit", () => {
        let state = labeling();
        state = reduce(state, { type: "choose", field: "color", value: "yellow" }) as never;
        state = reduce(state, { type: "choose", field: "shape", value: "ovate" }) as never;
        state = reduce(state, { type: "choose", field: "splotches", value: "low" }) as never;
        state = reduce(state, { type: "submit_started" }) as never;
        expect(reduce(state, { type: "submit_started" })).toBe(state);
        expect(reduce(state, { type: "choose", field: "color", value: "yellow_green" })).toBe(
            state,
        );
    });

    it("keeps the selection when a submit is rejected", () => {
        let state = labeling();
        state = reduce(state, { type: "choose", field: "color", value: "yellow" }) as never;
        state = reduce(state, { type: "choose", field: "shape", value: "ovate" }) as never;
        state = reduce(state, { type: "choose", field: "splotches", value: "low" }) as never;
        state = reduce(state, { type: "submit_started" }) as never;
        const rejected = reduce(state, {
            type: "submit_failed",
            message: "already labeled (HTTP 409)",
        }) as Extract<UiState, { phase: "labeling" }>;
        expect(rejected.selection).toEqual({ color: "yellow", shape: "ovate", splotches: "low" });
        expect(rejected.submitting).toBe(false);
        expect(rejected.error).toContain("409");
    });

    it("moves to done with final counts when exhausted", () => {
        const progress = {
            suitability: { labeled: 3, total: 3 },
            morphology: { labeled: 1, total: 3 },
        };
        const state = reduce({ phase: "loading", task: "suitability" }, { type: "exhausted", progress });
        expect(state).toEqual({ phase: "done", task: "suitability", progress });
    });
});

describe("wire format", () => {
    it("POSTs {crop_id, task, labels} as the request body", async () => {
        const recorded: { url: string; body: unknown }[] = [];
        vi.stubGlobal("fetch", async (url: string, init?: RequestInit) => {
            recorded.push({ url: String(url), body: JSON.parse(String(init?.body)) });
            return new Response("{}", { status: 200 });
        });
        try {
            const api = new AnnotationApi("http://service");
            await api.submit("leaf_1", "morphology", {
                color: "light_green",
                shape: "ovate",
                splotches: "none",
            });
            expect(recorded).toEqual([
                {
                    url: "http://service/api/labels",
                    body: {
                        crop_id: "leaf_1",
                        task: "morphology",
                        labels: { color: "light_green", shape: "ovate", splotches: "none" },
                    },
                },
            ]);
        } finally {
            vi.unstubAllGlobals();
        }
    });
});
