import { MORPHOLOGY_GROUPS, type MorphologyField, type TaskKind } from "./contract";
import type { Progress, TaskItem } from "./api";

/** Pending choices; morphology fields fill one by one, suitability is a flag. */
export interface Selection {
    good?: boolean;
    color?: string;
    shape?: string;
    splotches?: string;
}

export type UiState =
    | { phase: "idle" }
    | { phase: "loading"; task: TaskKind }
    | {
          phase: "labeling";
          task: TaskKind;
          cropId: string;
          imageUrl: string;
          selection: Selection;
          submitting: boolean;
          error: string | null;
      }
    | { phase: "done"; task: TaskKind; progress: Progress | null }
    | { phase: "error"; task: TaskKind; message: string };

export type UiEvent =
    | { type: "start"; task: TaskKind }
    | { type: "task_loaded"; item: TaskItem }
    | { type: "exhausted"; progress: Progress | null }
    | { type: "load_failed"; message: string }
    | { type: "choose"; field: MorphologyField; value: string }
    | { type: "choose_suitability"; good: boolean }
    | { type: "submit_started" }
    | { type: "submit_succeeded" }
    | { type: "submit_failed"; message: string };

export function selectionComplete(task: TaskKind, selection: Selection): boolean {
    if (task === "suitability") return selection.good !== undefined;
    return MORPHOLOGY_GROUPS.every((group) => selection[group.field] !== undefined);
}

/** The `labels` object POSTed to the service; shape mirrors the task. */
export function selectionToLabels(task: TaskKind, selection: Selection): Record<string, unknown> {
    if (task === "suitability") return { good: selection.good === true };
    return {
        color: selection.color,
        shape: selection.shape,
        splotches: selection.splotches,
    };
}

/** First group without a choice yet; digit shortcuts fill groups in order. */
export function nextIncompleteGroup(selection: Selection): MorphologyField | null {
    for (const group of MORPHOLOGY_GROUPS) {
        if (selection[group.field] === undefined) return group.field;
    }
    return null;
}

export function reduce(state: UiState, event: UiEvent): UiState {
    switch (event.type) {
        case "start":
            return { phase: "loading", task: event.task };
        case "task_loaded":
            return {
                phase: "labeling",
                task: event.item.task,
                cropId: event.item.crop_id,
                imageUrl: event.item.image_url,
                selection: {},
                submitting: false,
                error: null,
            };
        case "exhausted":
            if (state.phase === "loading" || state.phase === "labeling") {
                return { phase: "done", task: state.task, progress: event.progress };
            }
            return state;
        case "load_failed":
            if (state.phase === "loading") {
                return { phase: "error", task: state.task, message: event.message };
            }
            return state;
        case "choose":
            if (state.phase !== "labeling" || state.submitting || state.task !== "morphology") {
                return state;
            }
            return {
                ...state,
                selection: { ...state.selection, [event.field]: event.value },
                error: null,
            };
        case "choose_suitability":
            if (state.phase !== "labeling" || state.submitting || state.task !== "suitability") {
                return state;
            }
            return { ...state, selection: { good: event.good }, error: null };
        case "submit_started":
            if (
                state.phase !== "labeling" ||
                state.submitting ||
                !selectionComplete(state.task, state.selection)
            ) {
                return state;
            }
            return { ...state, submitting: true, error: null };
        case "submit_failed":
            // non-destructive: the selection stays for the operator to adjust
            if (state.phase !== "labeling") return state;
            return { ...state, submitting: false, error: event.message };
        case "submit_succeeded":
            if (state.phase !== "labeling") return state;
            return { phase: "loading", task: state.task };
    }
}
