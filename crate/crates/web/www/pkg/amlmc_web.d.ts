/* tslint:disable */
/* eslint-disable */

export class DensityView {
    private constructor();
    free(): void;
    [Symbol.dispose](): void;
    cells(): Float64Array;
    errorEstimate(): number;
    qoi(): number;
}

export function errorDensity(sigma2: number, seed: number, k: number): DensityView;

export function fieldGrid(sigma2: number, seed: number, n: number): Float64Array;

export function maxMesh(): number;

export function meshCells(example: number, k: number): Float64Array;

export type InitInput = RequestInfo | URL | Response | BufferSource | WebAssembly.Module;

export interface InitOutput {
    readonly memory: WebAssembly.Memory;
    readonly __wbg_densityview_free: (a: number, b: number) => void;
    readonly densityview_cells: (a: number) => [number, number];
    readonly densityview_errorEstimate: (a: number) => number;
    readonly densityview_qoi: (a: number) => number;
    readonly errorDensity: (a: number, b: number, c: number) => [number, number, number];
    readonly fieldGrid: (a: number, b: number, c: number) => [number, number, number, number];
    readonly maxMesh: () => number;
    readonly meshCells: (a: number, b: number) => [number, number, number, number];
    readonly __wbindgen_externrefs: WebAssembly.Table;
    readonly __wbindgen_free: (a: number, b: number, c: number) => void;
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
