import { MORPHOLOGY_GROUPS, SUITABILITY_OPTIONS, TASKS } from "./contract";
import type { AppController } from "./controller";
import { nextIncompleteGroup, selectionComplete, type UiState } from "./state";

/** URL resolution is all the view needs from the API. */
export interface ImageSource {
    imageUrl(path: string): string;
}

function el<K extends keyof HTMLElementTagNameMap>(
    tag: K,
    className?: string,
    text?: string,
): HTMLElementTagNameMap[K] {
    const node = document.createElement(tag);
    if (className) node.className = className;
    if (text !== undefined) node.textContent = text;
    return node;
}

export function render(
    root: HTMLElement,
    state: UiState,
    controller: AppController,
    api: ImageSource,
): void {
    root.replaceChildren();

    const header = el("header");
    header.appendChild(el("h1", "title", "Leaf annotation"));
    const nav = el("nav", "tasks");
    for (const task of TASKS) {
        const button = el("button", "task-switch", task);
        button.dataset.task = task;
        if ((state.phase === "labeling" || state.phase === "loading") && state.task === task) {
            button.classList.add("active");
        }
        button.addEventListener("click", () => void controller.start(task));
        nav.appendChild(button);
    }
    header.appendChild(nav);
    root.appendChild(header);

    switch (state.phase) {
        case "idle":
        case "loading":
            root.appendChild(el("p", "status", "Loading…"));
            return;
        case "error": {
            root.appendChild(el("p", "error-banner", state.message));
            const retry = el("button", "retry", "Retry");
            retry.addEventListener("click", () => void controller.retry());
            root.appendChild(retry);
            return;
        }
        case "done": {
            root.appendChild(el("h2", "done-title", "All crops labeled"));
            if (state.progress) {
                const list = el("ul", "final-counts");
                for (const task of TASKS) {
                    const counts = state.progress[task];
                    list.appendChild(
                        el("li", "count", `${task}: ${counts.labeled} of ${counts.total}`),
                    );
                }
                root.appendChild(list);
            }
            return;
        }
        case "labeling":
            break;
    }

    const figure = el("figure", "crop");
    const img = el("img", "crop-image");
    img.src = api.imageUrl(state.imageUrl);
    img.alt = `leaf crop ${state.cropId}`;
    figure.appendChild(img);
    figure.appendChild(el("figcaption", "crop-id", state.cropId));
    root.appendChild(figure);

    if (state.error) {
        root.appendChild(el("p", "error-banner", state.error));
    }

    if (state.task === "suitability") {
        root.appendChild(renderSuitability(state, controller));
    } else {
        root.appendChild(renderMorphology(state, controller));
    }

    const submit = el("button", "submit", state.submitting ? "Submitting…" : "Submit (Enter)");
    submit.id = "submit";
    submit.disabled = !controller.canSubmit();
    submit.addEventListener("click", () => void controller.submit());
    root.appendChild(submit);

    root.appendChild(
        el(
            "p",
            "hint",
            state.task === "suitability"
                ? "Keys: g = good, b = bad, Enter = submit"
                : "Keys: 1-4 choose in the first open group, Enter = submit",
        ),
    );
}

function renderSuitability(
    state: Extract<UiState, { phase: "labeling" }>,
    controller: AppController,
): HTMLElement {
    const group = el("div", "group");
    group.dataset.group = "suitability";
    group.appendChild(el("h3", "group-title", "Suitability"));
    for (const option of SUITABILITY_OPTIONS) {
        const button = el("button", "option", option);
        button.dataset.value = option;
        const selected = state.selection.good === (option === "good");
        if (state.selection.good !== undefined && selected) button.classList.add("selected");
        button.addEventListener("click", () => controller.chooseSuitability(option === "good"));
        group.appendChild(button);
    }
    return group;
}

function renderMorphology(
    state: Extract<UiState, { phase: "labeling" }>,
    controller: AppController,
): HTMLElement {
    const wrap = el("div", "groups");
    for (const group of MORPHOLOGY_GROUPS) {
        const box = el("div", "group");
        box.dataset.group = group.field;
        box.appendChild(el("h3", "group-title", group.title));
        for (const option of group.options) {
            const button = el("button", "option", option);
            button.dataset.value = option;
            if (state.selection[group.field] === option) button.classList.add("selected");
            button.addEventListener("click", () => controller.choose(group.field, option));
            box.appendChild(button);
        }
        wrap.appendChild(box);
    }
    return wrap;
}

/** Keyboard-first labeling: g/b, 1-4, Enter. */
export function bindKeyboard(target: EventTarget, controller: AppController): void {
    target.addEventListener("keydown", (event) => {
        const key = (event as KeyboardEvent).key;
        const state = controller.state;
        if (state.phase !== "labeling" || state.submitting) return;
        if (key === "Enter") {
            event.preventDefault();
            void controller.submit();
            return;
        }
        if (state.task === "suitability") {
            if (key === "g") controller.chooseSuitability(true);
            if (key === "b") controller.chooseSuitability(false);
            return;
        }
        if (key >= "1" && key <= "4") {
            const field = nextIncompleteGroup(state.selection);
            if (field === null) return;
            const group = MORPHOLOGY_GROUPS.find((g) => g.field === field);
            const option = group?.options[Number(key) - 1];
            if (group && option !== undefined) controller.choose(group.field, option);
        }
    });
}

export { selectionComplete };
