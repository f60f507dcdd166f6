extern int keys[64];

/* Linear scan with two ways out besides running off the end: the key is
   found, or a larger key proves it absent. */
int scan(int key) {
    int pos = -1;
    for (int i = 0; i < 64; i++) {
        if (keys[i] == key) {
            pos = i;
            break;
        }
        if (keys[i] > key) {
            pos = -2 - i;
            break;
        }
    }
    return pos;
}

int bisect(int key) {
    int lo = 0;
    int hi = 63;
    while (lo <= hi) {
        int mid = (lo + hi) >> 1;
        int k = keys[mid];
        if (k == key)
            return mid;
        if (k < key)
            lo = mid + 1;
        else
            hi = mid - 1;
    }
    return -1 - lo;
}
