void bubble(int n, int A[const restrict static n])
{
  for (int p = 0; p < n; p++)
    for (int i = 0; i < n - 1; i++)
      if (A[i] > A[i + 1]) {
        int t = A[i];
        A[i] = A[i + 1];
        A[i + 1] = t;
      }
}
