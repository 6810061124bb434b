import { ApiError, type Progress, type TaskItem } from "./api";
import type { MorphologyField, TaskKind } from "./contract";
import {
    reduce,
    selectionComplete,
    selectionToLabels,
    type UiEvent,
    type UiState,
} from "./state";

/** What the controller needs from the HTTP client (AnnotationApi satisfies it). */
export interface LabelingApi {
    next(task: TaskKind): Promise<TaskItem | null>;
    submit(cropId: string, task: TaskKind, labels: Record<string, unknown>): Promise<void>;
    progress(): Promise<Progress>;
}

type Listener = (state: UiState) => void;

/** Wires the state machine to the HTTP client; at most one request in flight. */
export class AppController {
    state: UiState = { phase: "idle" };
    private listeners: Listener[] = [];

    constructor(private readonly api: LabelingApi) {}

    subscribe(listener: Listener): void {
        this.listeners.push(listener);
        listener(this.state);
    }

    private dispatch(event: UiEvent): void {
        this.state = reduce(this.state, event);
        for (const listener of this.listeners) listener(this.state);
    }

    async start(task: TaskKind): Promise<void> {
        this.dispatch({ type: "start", task });
        await this.loadNext(task);
    }

    private async loadNext(task: TaskKind): Promise<void> {
        try {
            const item = await this.api.next(task);
            if (item === null) {
                let progress = null;
                try {
                    progress = await this.api.progress();
                } catch {
                    // completion screen simply omits the counts
                }
                this.dispatch({ type: "exhausted", progress });
            } else {
                this.dispatch({ type: "task_loaded", item });
            }
        } catch (error) {
            this.dispatch({ type: "load_failed", message: describe(error) });
        }
    }

    choose(field: MorphologyField, value: string): void {
        this.dispatch({ type: "choose", field, value });
    }

    chooseSuitability(good: boolean): void {
        this.dispatch({ type: "choose_suitability", good });
    }

    canSubmit(): boolean {
        return (
            this.state.phase === "labeling" &&
            !this.state.submitting &&
            selectionComplete(this.state.task, this.state.selection)
        );
    }

    async submit(): Promise<void> {
        if (!this.canSubmit() || this.state.phase !== "labeling") return;
        const { task, cropId, selection } = this.state;
        this.dispatch({ type: "submit_started" });
        try {
            await this.api.submit(cropId, task, selectionToLabels(task, selection));
        } catch (error) {
            this.dispatch({ type: "submit_failed", message: describe(error) });
            return;
        }
        this.dispatch({ type: "submit_succeeded" });
        await this.loadNext(task);
    }

    /** Retry after a failed load; a failed submit retries via submit(). */
    async retry(): Promise<void> {
        if (this.state.phase === "error") {
            await this.start(this.state.task);
        }
    }
}

function describe(error: unknown): string {
    if (error instanceof ApiError) return `${error.message} (HTTP ${error.status})`;
    if (error instanceof Error) return `network failure: ${error.message}`;
    return String(error);
}
