// @vitest-environment jsdom
import { beforeEach, describe, expect, it } from "vitest";

import contract from "../../src/phenopipe/contracts/label_enums.json";
import { ApiError, type Progress, type TaskItem } from "../src/api";
import type { TaskKind } from "../src/contract";
import { AppController, type LabelingApi } from "../src/controller";
import { bindKeyboard, render } from "../src/view";

class FakeApi implements LabelingApi {
    queue: Record<TaskKind, TaskItem[]> = { suitability: [], morphology: [] };
    submitted: { cropId: string; task: TaskKind; labels: Record<string, unknown> }[] = [];
    failNext: ApiError | null = null;

    imageUrl(path: string): string {
        return path;
    }

    async next(task: TaskKind): Promise<TaskItem | null> {
        return this.queue[task].shift() ?? null;
    }

    async submit(cropId: string, task: TaskKind, labels: Record<string, unknown>): Promise<void> {
        if (this.failNext) {
            const failure = this.failNext;
            this.failNext = null;
            throw failure;
        }
        this.submitted.push({ cropId, task, labels });
    }

    async progress(): Promise<Progress> {
        return {
            suitability: { labeled: 2, total: 2 },
            morphology: { labeled: 1, total: 2 },
        };
    }
}

function task(id: string, kind: TaskKind): TaskItem {
    return { crop_id: id, task: kind, image_url: `/crops/${id}.png` };
}

let root: HTMLElement;
let api: FakeApi;
let controller: AppController;

beforeEach(() => {
    document.body.innerHTML = '<main id="app"></main>';
    root = document.getElementById("app")!;
    api = new FakeApi();
    controller = new AppController(api);
    controller.subscribe((state) => render(root, state, controller, api));
});

function optionTexts(group: string): string[] {
    return [...root.querySelectorAll(`[data-group="${group}"] .option`)].map(
        (node) => node.textContent ?? "",
    );
}

describe("rendered enum lists", () => {
    it("match the shared contract file exactly", async () => {
        api.queue.morphology.push(task("leaf_a", "morphology"));
        await controller.start("morphology");
        expect(optionTexts("color")).toEqual(contract.color);
        expect(optionTexts("shape")).toEqual(contract.shape);
        expect(optionTexts("splotches")).toEqual(contract.splotches);

        api.queue.suitability.push(task("leaf_b", "suitability"));
        await controller.start("suitability");
        expect(optionTexts("suitability")).toEqual(contract.suitability);
    });
});

describe("labeling flow", () => {
    it("submits the selected triple and advances", async () => {
        api.queue.morphology.push(task("leaf_a", "morphology"), task("leaf_b", "morphology"));
        await controller.start("morphology");

        const submit = root.querySelector<HTMLButtonElement>("#submit")!;
        expect(submit.disabled).toBe(true);

        (root.querySelector('[data-group="color"] [data-value="light_green"]') as HTMLElement).click();
        (root.querySelector('[data-group="shape"] [data-value="ovate"]') as HTMLElement).click();
        expect(root.querySelector<HTMLButtonElement>("#submit")!.disabled).toBe(true);
        (root.querySelector('[data-group="splotches"] [data-value="none"]') as HTMLElement).click();
        expect(root.querySelector<HTMLButtonElement>("#submit")!.disabled).toBe(false);

        await controller.submit();
        expect(api.submitted).toEqual([
            {
                cropId: "leaf_a",
                task: "morphology",
                labels: { color: "light_green", shape: "ovate", splotches: "none" },
            },
        ]);
        // advanced to the next crop with a cleared selection
        expect(root.querySelector(".crop-id")!.textContent).toBe("leaf_b");
        expect(root.querySelector<HTMLButtonElement>("#submit")!.disabled).toBe(true);
    });

    it("suitability keyboard shortcuts select and submit", async () => {
        api.queue.suitability.push(task("leaf_a", "suitability"), task("leaf_b", "suitability"));
        bindKeyboard(document, controller);
        await controller.start("suitability");

        document.dispatchEvent(new KeyboardEvent("keydown", { key: "g" }));
        expect(controller.canSubmit()).toBe(true);
        document.dispatchEvent(new KeyboardEvent("keydown", { key: "Enter" }));
        await new Promise((resolve) => setTimeout(resolve, 0));
        expect(api.submitted).toEqual([
            { cropId: "leaf_a", task: "suitability", labels: { good: true } },
        ]);
    });

    it("digit keys fill morphology groups in order", async () => {
        api.queue.morphology.push(task("leaf_a", "morphology"));
        bindKeyboard(document, controller);
        await controller.start("morphology");
        document.dispatchEvent(new KeyboardEvent("keydown", { key: "2" }));
        document.dispatchEvent(new KeyboardEvent("keydown", { key: "1" }));
        document.dispatchEvent(new KeyboardEvent("keydown", { key: "4" }));
        const state = controller.state;
        expect(state.phase).toBe("labeling");
        if (state.phase === "labeling") {
            expect(state.selection).toEqual({
                color: contract.color[1],
                shape: contract.shape[0],
                splotches: contract.splotches[3],
            });
        }
    });

    it("shows a non-destructive error on conflict", async () => {
        api.queue.suitability.push(task("leaf_a", "suitability"));
        await controller.start("suitability");
        controller.chooseSuitability(false);
        api.failNext = new ApiError(409, "already labeled");
        await controller.submit();
        expect(root.querySelector(".error-banner")!.textContent).toContain("already labeled");
        const state = controller.state;
        expect(state.phase).toBe("labeling");
        if (state.phase === "labeling") {
            expect(state.selection).toEqual({ good: false });
            expect(state.cropId).toBe("leaf_a");
        }
        expect(root.querySelector<HTMLButtonElement>("#submit")!.disabled).toBe(false);
    });

    it("renders the completion screen with final counts", async () => {
        await controller.start("suitability"); // queue empty: immediately done
        expect(root.querySelector(".done-title")).not.toBeNull();
        const counts = [...root.querySelectorAll(".count")].map((n) => n.textContent);
        expect(counts).toEqual(["suitability: 2 of 2", "morphology: 1 of 2"]);
    });
});
