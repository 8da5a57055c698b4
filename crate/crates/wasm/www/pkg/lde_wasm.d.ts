/* tslint:disable */
/* eslint-disable */

/**
 * Controller weights used by the learned DE in [`Controller::convergence`].
 */
export class Controller {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    /**
     * Best error of every algorithm (in [`algorithms`] order) sampled at
     * `points` evenly spaced evaluation counts up to `budget`; `points`
     * values per algorithm, concatenated.
     */
    convergence(family: string, dim: number, seed: number, budget: number, points: number): Float64Array;
    /**
     * Parses the bytes of a `weights.lde` file written by `lde train`.
     */
    static from_bytes(bytes: Uint8Array): Controller;
    /**
     * Seeded initial weights for `N = 20`, `b = 5`, `H = 32`.
     */
    static untrained(seed: number): Controller;
    readonly label: string;
    readonly population: number;
}

export function algorithms(): string[];

/**
 * μ after each update of the scalar bandit.
 */
export function bandit(seed: number, steps: number, alpha: number, sigma: number, target: number): Float64Array;

export function families(): string[];

/**
 * `log10(1 + error)` of a shifted, rotated 2-D instance on a
 * `resolution × resolution` grid over the search box, row-major with the
 * top row at the upper bound of the second coordinate. The last two entries
 * are the optimum's grid coordinates.
 */
export function landscape(family: string, seed: number, resolution: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_controller_free: (a: number, b: number) => void;
    readonly algorithms: () => [number, number];
    readonly bandit: (a: number, b: number, c: number, d: number, e: number) => [number, number];
    readonly controller_convergence: (a: number, b: number, c: number, d: number, e: number, f: number, g: number) => [number, number, number, number];
    readonly controller_from_bytes: (a: number, b: number) => [number, number, number];
    readonly controller_label: (a: number) => [number, number];
    readonly controller_population: (a: number) => number;
    readonly controller_untrained: (a: number) => [number, number, number];
    readonly families: () => [number, number];
    readonly landscape: (a: number, b: number, c: number, d: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __externref_drop_slice: (a: number, b: number) => void;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
    readonly __wbindgen_malloc: (a: number, b: number) => number;
    readonly __wbindgen_realloc: (a: number, b: number, c: number, d: number) => number;
    readonly __externref_table_dealloc: (a: number) => void;
    readonly __wbindgen_start: () => void;
}

export type SyncInitInput = BufferSource | WebAssembly.Module;

/**
 * Instantiates the given `module`, which can either be bytes or
 * a precompiled `WebAssembly.Module`.
 *
 * @param {{ module: SyncInitInput }} module - Passing `SyncInitInput` directly is deprecated.
 *
 * @returns {InitOutput}
 */
export function initSync(module: { module: SyncInitInput } | SyncInitInput): InitOutput;

/**
 * If `module_or_path` is {RequestInfo} or {URL}, makes a request and
 * for everything else, calls `WebAssembly.instantiate` directly.
 *
 * @param {{ module_or_path: InitInput | Promise<InitInput> }} module_or_path - Passing `InitInput` directly is deprecated.
 *
 * @returns {Promise<InitOutput>}
 */
export default function __wbg_init (module_or_path?: { module_or_path: InitInput | Promise<InitInput> } | InitInput | Promise<InitInput>): Promise<InitOutput>;
