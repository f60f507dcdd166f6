int v[32];

/* Bubble sort of the first n elements; stops early once a pass swaps
   nothing. */
void sort(int n) {
    for (int pass = 0; pass < n; pass++) {
        int swapped = 0;
        for (int i = 0; i + 1 < n - pass; i++) {
            if (v[i] > v[i + 1]) {
                int t = v[i];
                v[i] = v[i + 1];
                v[i + 1] = t;
                swapped = 1;
            }
        }
        if (swapped == 0)
            break;
    }
}
